//! Discretises a disc and reports the node classification and the covariant
//! gradient of a linear field.

use graphflow::expr::FieldExpr;
use graphflow::grid::{GridDomain, NodeKind, RegionSpec};
use graphflow::manifold::MetricChart;

fn main() -> graphflow::Result<()> {
    let chart = MetricChart::euclidean(&[[-1.0, 1.0], [-1.0, 1.0]])?;
    let region = RegionSpec::Disc {
        center: vec![0.0, 0.0],
        radius: 0.8,
    };
    let d = GridDomain::build(chart, region, 1.0 / 16.0)?;
    let count = |k: NodeKind| d.mask().iter().filter(|m| **m == k).count();
    println!(
        "{} nodes: {} interior, {} dirichlet, {} exterior; {} boundary crossings",
        d.len(),
        count(NodeKind::Interior),
        count(NodeKind::Dirichlet),
        count(NodeKind::Exterior),
        d.boundary_points().len()
    );
    let u = FieldExpr::Linear {
        coeffs: vec![0.5, -0.25],
        offset: 1.0,
    }
    .sample(&d)?;
    let centre = d.node_at(&[16, 16]).expect("centre node");
    println!("covariant gradient at the centre: {:?}", d.covariant_gradient(&u, centre)?);
    Ok(())
}
