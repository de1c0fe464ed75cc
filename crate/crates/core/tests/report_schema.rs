//! `report.json` validated against the published JSON Schema, for a run
//! that exercises every optional section.

use std::fs;

use graphflow::experiment::{emit_report, report_schema, run_with, ExperimentConfig, EXIT_OK};
use jsonschema::JSONSchema;
use serde_json::{json, Value};

fn full_config() -> ExperimentConfig {
    serde_json::from_value(json!({
        "chart": {"kind": "euclidean", "n": 2, "box": [[-1.0, 1.0], [-1.0, 1.0]]},
        "region": {"region": "disc", "center": [0.0, 0.0], "radius": 0.8},
        "h": 0.125,
        "phi": {"expr": {"kind": "linear", "coeffs": [0.2, -0.1]}},
        "flow": {"t_end": 20.0, "diagnostics_every": 10},
        "schedule": {"eps": [0.1, 0.05], "steady_tol": 1e-6},
        "barrier": {"K": 0.3, "gamma": 2.0, "stride": 4},
        "time_sequences": {"a": [0.5, 1.0, 2.0], "b": [0.25, 0.75, 1.5]},
        "perimeter_checks": {"random_sets": 4},
        "snapshot_every_steps": 50,
        "seed": 7
    }))
    .unwrap()
}

fn compile() -> JSONSchema {
    JSONSchema::compile(&report_schema()).expect("schema compiles")
}

fn errors(schema: &JSONSchema, doc: &Value) -> Vec<String> {
    match schema.validate(doc) {
        Ok(()) => Vec::new(),
        Err(errs) => errs.map(|e| format!("{} at {}", e, e.instance_path)).collect(),
    }
}

#[test]
fn full_report_conforms_to_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let outcome = run_with(&full_config(), tmp.path(), &out);
    assert_eq!(outcome.code, EXIT_OK, "{}", outcome.message);
    let path = emit_report(&out).unwrap();
    let report: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();

    let schema = compile();
    let errs = errors(&schema, &report);
    assert!(errs.is_empty(), "{errs:#?}");
    for section in ["attainment", "barrier", "functionals", "time_sequence", "perimeter_checks"] {
        assert!(report[section].is_object(), "{section} should be populated");
    }
    for (name, sha) in report["files"].as_object().unwrap() {
        assert_eq!(sha.as_str().unwrap().len(), 64, "{name}");
    }
    assert!(fs::read_dir(out.join("snapshots")).unwrap().count() > 0);
}

#[test]
fn schema_rejects_malformed_reports() {
    let schema = compile();
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let mut cfg = full_config();
    cfg.barrier = None;
    cfg.time_sequences = None;
    cfg.perimeter_checks = None;
    assert_eq!(run_with(&cfg, tmp.path(), &out).code, EXIT_OK);
    let good: Value = serde_json::from_str(&fs::read_to_string(emit_report(&out).unwrap()).unwrap()).unwrap();
    assert!(errors(&schema, &good).is_empty());

    let mut wrong_id = good.clone();
    wrong_id["schema"] = json!("something/else");
    assert!(!errors(&schema, &wrong_id).is_empty());

    let mut missing = good.clone();
    missing.as_object_mut().unwrap().remove("continuation");
    assert!(!errors(&schema, &missing).is_empty());

    let mut bad_type = good;
    bad_type["continuation"]["per_eps"][0]["steps"] = json!("many");
    assert!(!errors(&schema, &bad_type).is_empty());
}
