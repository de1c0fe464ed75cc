//! Runs the viscous flow from a bump towards flat dirichlet data and prints
//! the energy and dissipation along the way.

use graphflow::expr::FieldExpr;
use graphflow::flow::{Flow, FlowParams};
use graphflow::functionals::e_eps;
use graphflow::grid::{GridDomain, GridField, RegionSpec};
use graphflow::manifold::MetricChart;

fn main() -> graphflow::Result<()> {
    let chart = MetricChart::euclidean(&[[0.0, 1.0], [0.0, 1.0]])?;
    let d = GridDomain::build(chart, RegionSpec::whole_box(), 1.0 / 32.0)?;
    let u0 = FieldExpr::SineBump {
        amplitude: 0.5,
        lo: vec![0.0, 0.0],
        hi: vec![1.0, 1.0],
    }
    .sample(&d)?;
    let phi = GridField::constant(&d, 0.0);
    let eps = 0.01;
    let params = FlowParams {
        eps,
        t_end: 1.0,
        diagnostics_every: 100,
        ..Default::default()
    };
    let mut flow = Flow::new(params, &phi, &u0)?;
    let mut state = flow.initial_state();
    let e0 = e_eps(&state.u, eps, None)?.value;
    for t in [0.05, 0.1, 0.2, 0.4] {
        flow.advance_to(&mut state, t)?;
        let e = e_eps(&state.u, eps, None)?.value;
        println!(
            "t = {t:.2}: sup u = {:.4}, sup u_t = {:.4}, E drop {:.5}, dissipation {:.5}",
            state.u.max(),
            state.sup_ut(),
            e0 - e,
            state.dissipation_cum
        );
    }
    Ok(())
}
