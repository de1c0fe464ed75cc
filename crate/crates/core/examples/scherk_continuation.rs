//! Recovers Scherk's surface from its boundary values by continuation in
//! the viscosity and reports the stage-by-stage convergence.

use graphflow::continuation::{eps_continuation, Schedule};
use graphflow::expr::FieldExpr;
use graphflow::flow::FlowParams;
use graphflow::grid::{GridDomain, GridField, RegionSpec};
use graphflow::manifold::MetricChart;

fn main() -> graphflow::Result<()> {
    let chart = MetricChart::euclidean(&[[-1.0, 1.0], [-1.0, 1.0]])?;
    let d = GridDomain::build(chart, RegionSpec::whole_box(), 1.0 / 16.0)?;
    let exact = FieldExpr::Scherk {
        scale: 1.0,
        center: None,
    }
    .sample(&d)?;
    let schedule = Schedule {
        eps: vec![0.1, 0.01, 0.001],
        ..Default::default()
    };
    let params = FlowParams {
        t_end: 100.0,
        diagnostics_every: 1000,
        ..Default::default()
    };
    let rep = eps_continuation(&schedule, &params, &exact, &GridField::constant(&d, 0.0))?;
    for (i, s) in rep.per_eps.iter().enumerate() {
        let gap = i.checked_sub(1).map_or("-".to_string(), |j| format!("{:.2e}", rep.cauchy_gaps[j]));
        println!(
            "eps {:.0e}: {} steps to t = {:.2}, converged {}, gap to previous stage {gap}",
            s.eps, s.steps, s.t_final, s.converged
        );
    }
    let u = rep.u_bar().expect("at least one stage");
    println!(
        "sup |u - scherk| = {:.3e}, trace error {:.3e}",
        u.sup_diff_on(&exact, d.interior()),
        rep.trace_error
    );
    Ok(())
}
