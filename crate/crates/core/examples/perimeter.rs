//! Area, total variation and the subgraph perimeter of a smooth graph under
//! horizontal refinement, and the lattice perimeter of a set and its
//! complement.

use std::sync::Arc;

use graphflow::expr::FieldExpr;
use graphflow::functionals::{area, set_perimeter, subgraph_perimeter, total_variation, DiscreteSet, Window};
use graphflow::grid::{GridDomain, RegionSpec};
use graphflow::manifold::MetricChart;

fn unit_square(h: f64) -> graphflow::Result<Arc<GridDomain>> {
    GridDomain::build(MetricChart::euclidean(&[[0.0, 1.0], [0.0, 1.0]])?, RegionSpec::whole_box(), h)
}

fn main() -> graphflow::Result<()> {
    let bump = FieldExpr::SineBump {
        amplitude: 0.5,
        lo: vec![0.0, 0.0],
        hi: vec![1.0, 1.0],
    };
    let h_t = 1.0 / 64.0;
    for h in [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
        let u = bump.sample(&unit_square(h)?)?;
        let a = area(&u).value;
        let p = subgraph_perimeter(&u, 2.0, h_t)?;
        println!(
            "h = {h}: area {a:.6}, TV {:.6}, subgraph perimeter {p:.6} (relative gap {:.2e})",
            total_variation(&u).value,
            (p - a) / a
        );
    }

    // Facets are axis-aligned, so a disc of radius r measures 8r, not 2πr.
    let d = unit_square(1.0 / 32.0)?;
    let disc = DiscreteSet::from_fn(&d, |x| (x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2) < 0.09);
    let w = Window::full(&d);
    println!(
        "disc of radius 0.3: Per = {:.4}, Per(complement) = {:.4}",
        set_perimeter(&disc, &w)?,
        set_perimeter(&disc.complement(), &w)?
    );
    Ok(())
}
