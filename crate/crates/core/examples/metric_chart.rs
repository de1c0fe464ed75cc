//! Builds the Poincaré disk chart and compares its analytic Christoffel
//! symbols with a finite-difference evaluation.

use graphflow::manifold::MetricChart;
use serde_json::Map;

fn main() -> graphflow::Result<()> {
    let chart = MetricChart::builtin("poincare_disk", 2, &[[-0.6, 0.6], [-0.6, 0.6]], &Map::new())?;
    for x in [[0.0, 0.0], [0.3, -0.2], [0.5, 0.1]] {
        let m = chart.metric_at(&x)?;
        let exact = chart.christoffel_at(&x)?;
        let fd = chart.christoffel_fd(&x, 1e-4)?;
        let mut gap: f64 = 0.0;
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    gap = gap.max((exact.values[k][i][j] - fd.values[k][i][j]).abs());
                }
            }
        }
        println!(
            "x = {x:?}: sigma_11 = {:.6}, sqrt det = {:.6}, max |Gamma - Gamma_fd| = {gap:.2e}",
            m.metric[0][0], m.sqrt_det
        );
    }
    Ok(())
}
