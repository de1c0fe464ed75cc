//! Certifies local barriers around the boundary of a disc and summarises
//! the dirichlet solvability check.

use graphflow::barrier::{check_dirichlet_solvability, SearchOptions};
use graphflow::expr::FieldExpr;
use graphflow::grid::{GridDomain, RegionSpec};
use graphflow::manifold::MetricChart;

fn main() -> graphflow::Result<()> {
    let chart = MetricChart::euclidean(&[[-1.0, 1.0], [-1.0, 1.0]])?;
    let region = RegionSpec::Disc {
        center: vec![0.0, 0.0],
        radius: 0.8,
    };
    let d = GridDomain::build(chart, region, 1.0 / 32.0)?;
    let phi = FieldExpr::Linear {
        coeffs: vec![0.1, 0.0],
        offset: 0.0,
    }
    .sample(&d)?;
    let rep = check_dirichlet_solvability(&phi, &d, 0.3, 2.0, &SearchOptions::default(), 8);
    for p in rep.points.iter().take(4) {
        println!(
            "x0 = ({:+.3}, {:+.3}): {:?}, alpha {:?}, radius {:?}, rim {:?}",
            p.x0[0], p.x0[1], p.status, p.alpha, p.radius, p.rim_height
        );
    }
    println!(
        "{} points, lipschitz {:.3}, oscillation {:.3}: {}",
        rep.points.len(),
        rep.lipschitz,
        rep.oscillation,
        rep.verdict
    );
    Ok(())
}
