//! Runs a JSON-configured experiment end to end (as `graphflow run` does)
//! into a temporary directory and emits its report.

use graphflow::experiment::{emit_report, run_with, ExperimentConfig};

fn main() -> graphflow::Result<()> {
    let cfg: ExperimentConfig = serde_json::from_str(
        r#"{
            "chart": {"kind": "euclidean", "n": 2, "box": [[0.0, 1.0], [0.0, 1.0]]},
            "h": 0.0625,
            "phi": {"expr": {"kind": "linear", "coeffs": [0.5, 0.25]}},
            "schedule": {"eps": [0.1, 0.01]},
            "flow": {"t_end": 20.0, "diagnostics_every": 50},
            "barrier": {"K": 0.3, "gamma": 2.0, "stride": 4}
        }"#,
    )?;
    let out = std::env::temp_dir().join("graphflow_example_experiment");
    let outcome = run_with(&cfg, std::path::Path::new("."), &out);
    println!("exit code {}: {}", outcome.code, outcome.message);
    let report = emit_report(&out)?;
    println!("report written to {}", report.display());
    Ok(())
}
