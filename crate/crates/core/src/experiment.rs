//! Batch experiments: config parsing, orchestration, and the on-disk bundle.
//!
//! A run directory holds snapshots and diagnostics as CSV, reports as
//! pretty-printed JSON with sorted keys, and `manifest.json` listing every
//! other file with its SHA-256. Failed runs additionally leave
//! `failure.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::barrier::{self, SearchOptions, SolvabilityReport};
use crate::continuation::{self, AttainmentReport, ContinuationReport, Schedule};
use crate::error::{Error, Result};
use crate::expr::FieldSpec;
use crate::flow::{self, FlowParams};
use crate::functionals;
use crate::grid::{GridDomain, GridField, RegionSpec};
use crate::manifold::{ChartSpec, MetricChart};
use crate::selftest;

pub const OUT_ENV: &str = "GRAPHFLOW_OUT";
pub const REPORT_SCHEMA_ID: &str = "graphflow.report/1";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_ESTIMATE: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierConfig {
    #[serde(rename = "K")]
    pub k: f64,
    pub gamma: f64,
    /// Search every `stride`-th boundary point.
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default)]
    pub r_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSequenceConfig {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Viscosity for the sampled run; defaults to the last schedule value.
    #[serde(default)]
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerimeterCheckConfig {
    pub random_sets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub chart: ChartSpec,
    #[serde(default = "RegionSpec::whole_box")]
    pub region: RegionSpec,
    pub h: f64,
    pub phi: FieldSpec,
    #[serde(default = "zero_field")]
    pub u0: FieldSpec,
    #[serde(default)]
    pub flow: FlowParams,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub barrier: Option<BarrierConfig>,
    #[serde(default)]
    pub time_sequences: Option<TimeSequenceConfig>,
    #[serde(default)]
    pub perimeter_checks: Option<PerimeterCheckConfig>,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub seed: u64,
    /// Accepted for compatibility; sweeps run sequentially.
    #[serde(default = "one")]
    pub threads: usize,
    /// Write a snapshot of `u` every this many steps of each stage (0: off).
    #[serde(default)]
    pub snapshot_every_steps: usize,
    /// Records the user's assertion that the chart has `Ric ≥ 0`; not checked.
    #[serde(default)]
    pub ricci_nonnegative: Option<bool>,
}

fn one() -> usize {
    1
}

fn zero_field() -> FieldSpec {
    FieldSpec::Constant(0.0)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Config(format!("h must be positive, got {}", self.h)));
        }
        self.flow.validate().map_err(cfg)?;
        self.schedule.validate().map_err(cfg)?;
        if self.threads == 0 {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        if let Some(b) = &self.barrier {
            if !(b.k > 0.0) || !(b.gamma > 1.0) || b.stride == 0 {
                return Err(Error::Config(
                    "barrier needs K > 0, gamma > 1 and stride >= 1".into(),
                ));
            }
        }
        Ok(())
    }

    /// Output directory: `$GRAPHFLOW_OUT`, else `output_dir` relative to
    /// `base`, else `base/graphflow_out`.
    pub fn resolve_output(&self, base: &Path) -> PathBuf {
        if let Some(dir) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(dir);
        }
        match &self.output_dir {
            Some(d) => base.join(d),
            None => base.join("graphflow_out"),
        }
    }
}

/// Built problem data shared by the commands.
pub struct Problem {
    pub domain: std::sync::Arc<GridDomain>,
    pub phi: GridField,
    pub u0: GridField,
}

pub fn build_problem(cfg: &ExperimentConfig, base: &Path) -> Result<Problem> {
    let cfg_err = |e: Error| match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    };
    let mut chart_spec = cfg.chart.clone();
    if let Some(Value::String(csv)) = chart_spec.params.get("csv") {
        let resolved = base.join(csv).to_string_lossy().into_owned();
        chart_spec.params.insert("csv".into(), Value::String(resolved));
    }
    let chart = MetricChart::from_spec(&chart_spec).map_err(cfg_err)?;
    let region = match &cfg.region {
        RegionSpec::Table {
            values: None,
            csv: Some(p),
        } => RegionSpec::Table {
            values: None,
            csv: Some(base.join(p).to_string_lossy().into_owned()),
        },
        r => r.clone(),
    };
    let domain = GridDomain::build(chart, region, cfg.h).map_err(cfg_err)?;
    let phi = cfg.phi.build(&domain, base).map_err(cfg_err)?;
    let u0 = cfg.u0.build(&domain, base).map_err(cfg_err)?;
    Ok(Problem { domain, phi, u0 })
}

/// Maps an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Estimate { .. } => EXIT_ESTIMATE,
        Error::NotConverged { .. } | Error::NonFinite { .. } => EXIT_NOT_CONVERGED,
        _ => EXIT_CONFIG,
    }
}

/// Pretty JSON with sorted keys and a trailing newline.
pub fn to_sorted_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_sorted_json(value)?)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Rewrites `manifest.json` with every file under `dir` (recursively,
/// excluding the manifest itself), sorted by relative path.
pub fn write_manifest(dir: &Path) -> Result<()> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.sort();
    let mut entries = Vec::new();
    for rel in files {
        if rel == "manifest.json" {
            continue;
        }
        let bytes = fs::read(dir.join(&rel))?;
        entries.push(json!({
            "path": rel,
            "bytes": bytes.len(),
            "sha256": sha256_hex(&bytes),
        }));
    }
    write_json(&dir.join("manifest.json"), &json!({ "files": entries }))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path.strip_prefix(root).unwrap_or(&path);
            out.push(rel.to_string_lossy().replace('\\', "/"));
        }
    }
    Ok(())
}

fn write_failure(dir: &Path, code: i32, err: &Error, stage: &str) {
    let record = json!({
        "exit_code": code,
        "error": err.to_string(),
        "stage": stage,
    });
    let written = fs::create_dir_all(dir)
        .map_err(Error::from)
        .and_then(|_| write_json(&dir.join("failure.json"), &record))
        .and_then(|_| write_manifest(dir));
    if let Err(e) = written {
        eprintln!("graphflow: could not write failure record to {}: {e}", dir.display());
    }
}

/// Outcome of `run`: the exit code plus the directory written.
#[derive(Debug)]
pub struct RunOutcome {
    pub code: i32,
    pub out_dir: Option<PathBuf>,
    pub message: String,
}

/// Runs an experiment end to end. Never panics on bad input; every failure
/// is turned into an exit code and, where an output directory is known, a
/// `failure.json`.
pub fn run_experiment(config_path: &Path) -> RunOutcome {
    let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let cfg = match ExperimentConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            let out = fallback_output(config_path, &base);
            write_failure(&out, EXIT_CONFIG, &e, "config");
            return RunOutcome {
                code: EXIT_CONFIG,
                out_dir: Some(out),
                message: e.to_string(),
            };
        }
    };
    let out = cfg.resolve_output(&base);
    run_with(&cfg, &base, &out)
}

/// Output directory for a config that failed to load: whatever of
/// `$GRAPHFLOW_OUT` or a string `output_dir` can still be read, else the
/// default next to the config.
fn fallback_output(config_path: &Path, base: &Path) -> PathBuf {
    if let Some(dir) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(dir);
    }
    let declared = fs::read_to_string(config_path)
        .ok()
        .and_then(|t| serde_json::from_str::<Value>(&t).ok())
        .and_then(|v| v.get("output_dir").and_then(Value::as_str).map(str::to_owned));
    match declared {
        Some(d) => base.join(d),
        None => base.join("graphflow_out"),
    }
}

/// Runs an already-parsed config into `out`; relative paths in the config
/// resolve against `base`.
pub fn run_with(cfg: &ExperimentConfig, base: &Path, out: &Path) -> RunOutcome {
    let out = out.to_path_buf();
    if let Err(e) = cfg.validate() {
        write_failure(&out, EXIT_CONFIG, &e, "config");
        return RunOutcome {
            code: EXIT_CONFIG,
            out_dir: Some(out),
            message: e.to_string(),
        };
    }
    match run_in(cfg, base, &out) {
        Ok(None) => RunOutcome {
            code: EXIT_OK,
            out_dir: Some(out),
            message: "ok".into(),
        },
        Ok(Some((code, msg))) => RunOutcome {
            code,
            out_dir: Some(out),
            message: msg,
        },
        Err((stage, e)) => {
            let code = exit_code(&e);
            write_failure(&out, code, &e, stage);
            RunOutcome {
                code,
                out_dir: Some(out),
                message: e.to_string(),
            }
        }
    }
}

type StageResult<T> = std::result::Result<T, (&'static str, Error)>;

fn at<T>(stage: &'static str, r: Result<T>) -> StageResult<T> {
    r.map_err(|e| (stage, e))
}

/// `Ok(None)` on success; `Ok(Some(code, message))` for a completed but
/// non-converged run whose artifacts were still written.
fn run_in(cfg: &ExperimentConfig, base: &Path, out: &Path) -> StageResult<Option<(i32, String)>> {
    let problem = at("build", build_problem(cfg, base))?;
    at("output", fs::create_dir_all(out).map_err(Error::from))?;
    // stale bundles from earlier runs would pollute the manifest
    for stale in ["failure.json", "report.json", "diagnostics.csv"] {
        let p = out.join(stale);
        if p.exists() {
            at("output", fs::remove_file(&p).map_err(Error::from))?;
        }
    }
    at("output", write_json(&out.join("config.json"), cfg))?;
    at("output", problem.phi.save_csv(&out.join("phi.csv")))?;
    at("output", problem.u0.save_csv(&out.join("u0.csv")))?;

    let snapshots = out.join("snapshots");
    if cfg.snapshot_every_steps > 0 {
        at("output", fs::create_dir_all(&snapshots).map_err(Error::from))?;
    }
    let every = cfg.snapshot_every_steps;
    let mut observer = |stage: usize, state: &flow::FlowState| -> Result<()> {
        if every > 0 && state.step % every == 0 {
            state
                .u
                .save_csv(&snapshots.join(format!("stage{stage:02}_step{:08}.csv", state.step)))?;
        }
        Ok(())
    };
    let report = at(
        "continuation",
        continuation::eps_continuation_observed(&cfg.schedule, &cfg.flow, &problem.phi, &problem.u0, &mut observer),
    )?;
    let mut report = report;
    for (i, state) in report.histories.iter().enumerate() {
        let mut buf = Vec::new();
        at("output", flow::write_history_csv(&state.history, &mut buf))?;
        at(
            "output",
            fs::write(out.join(format!("diagnostics_stage{i:02}.csv")), buf).map_err(Error::from),
        )?;
    }
    let u_bar = report.u_bar().cloned();

    let barrier_report: Option<SolvabilityReport> = cfg.barrier.as_ref().map(|b| {
        let opts = SearchOptions {
            r_max: b.r_max,
            ..Default::default()
        };
        barrier::check_dirichlet_solvability(&problem.phi, &problem.domain, b.k, b.gamma, &opts, b.stride)
    });
    if let Some(b) = &barrier_report {
        at("output", write_json(&out.join("barrier.json"), b))?;
    }

    if let Some(ts) = &cfg.time_sequences {
        let eps = ts.eps.unwrap_or_else(|| *cfg.schedule.values().last().unwrap());
        let params = FlowParams { eps, ..cfg.flow.clone() };
        let check = at(
            "time_sequences",
            continuation::time_sequence_uniqueness_check(&params, &problem.phi, &problem.u0, &ts.a, &ts.b),
        )?;
        report.time_uniqueness_gap = Some(check.gap);
        at("output", write_json(&out.join("time_sequence.json"), &check))?;
    }

    if let Some(pc) = &cfg.perimeter_checks {
        let checks = at(
            "perimeter_checks",
            selftest::random_perimeter_checks(&problem.domain, cfg.seed, pc.random_sets),
        )?;
        at("output", write_json(&out.join("perimeter_checks.json"), &checks))?;
    }

    if let Some(u) = &u_bar {
        at("output", u.save_csv(&out.join("ubar.csv")))?;
        let attain = at(
            "attainment",
            continuation::boundary_attainment_report(u, &problem.phi, barrier_report.as_ref()),
        )?;
        at("output", write_json(&out.join("attainment.json"), &attain))?;
        let last_eps = report.eps_schedule.last().copied().unwrap_or(0.0);
        let fns = at("functionals", functional_summary(u, &problem.phi, last_eps))?;
        at("output", write_json(&out.join("functionals.json"), &fns))?;
    }
    at("output", write_json(&out.join("continuation.json"), &continuation_json(&report, cfg)))?;

    let outcome = if report.converged {
        None
    } else {
        let last = report.per_eps.last().map(|s| s.eps).unwrap_or(f64::NAN);
        let e = Error::NotConverged {
            eps: last,
            t_end: cfg.flow.t_end,
        };
        at(
            "output",
            write_json(
                &out.join("failure.json"),
                &json!({"exit_code": EXIT_NOT_CONVERGED, "error": e.to_string(), "stage": "continuation"}),
            ),
        )?;
        Some((EXIT_NOT_CONVERGED, e.to_string()))
    };
    at("output", write_manifest(out))?;
    Ok(outcome)
}

fn continuation_json(report: &ContinuationReport, cfg: &ExperimentConfig) -> Value {
    let mut v = serde_json::to_value(report).unwrap_or(Value::Null);
    if let Value::Object(m) = &mut v {
        m.insert("seed".into(), json!(cfg.seed));
        m.insert("ricci_nonnegative".into(), json!(cfg.ricci_nonnegative));
        m.insert("threads".into(), json!(cfg.threads));
    }
    v
}

fn functional_summary(u: &GridField, phi: &GridField, eps: f64) -> Result<Value> {
    let area = functionals::area(u);
    let tv = functionals::total_variation(u);
    let j = functionals::j_functional(u, phi)?;
    let e = functionals::e_eps(u, eps, None)?;
    Ok(json!({
        "area": area,
        "total_variation": tv,
        "j": j,
        "e_eps": e,
    }))
}

/// Runs only the barrier analysis of a config and writes `barrier.json`.
pub fn run_barrier(config_path: &Path) -> RunOutcome {
    let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let result = (|| -> StageResult<(PathBuf, SolvabilityReport)> {
        let cfg = at("config", ExperimentConfig::load(config_path))?;
        let b = cfg.barrier.clone().ok_or((
            "config",
            Error::Config("config has no `barrier` section".into()),
        ))?;
        let out = cfg.resolve_output(&base);
        let problem = at("build", build_problem(&cfg, &base))?;
        let opts = SearchOptions {
            r_max: b.r_max,
            ..Default::default()
        };
        let rep = barrier::check_dirichlet_solvability(&problem.phi, &problem.domain, b.k, b.gamma, &opts, b.stride);
        at("output", fs::create_dir_all(&out).map_err(Error::from))?;
        at("output", write_json(&out.join("barrier.json"), &rep))?;
        at("output", write_manifest(&out))?;
        Ok((out, rep))
    })();
    match result {
        Ok((out, rep)) => RunOutcome {
            code: EXIT_OK,
            out_dir: Some(out),
            message: rep.verdict,
        },
        Err((stage, e)) => RunOutcome {
            code: exit_code(&e),
            out_dir: None,
            message: format!("{stage}: {e}"),
        },
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Merges a completed run directory into `report.json` (and the stage
/// diagnostics into `diagnostics.csv`), then refreshes the manifest.
/// Idempotent: the output depends only on the run artifacts.
pub fn emit_report(dir: &Path) -> Result<PathBuf> {
    let cont_path = dir.join("continuation.json");
    if !cont_path.is_file() {
        return Err(Error::MissingArtifact(cont_path));
    }
    let continuation = read_json(&cont_path)?;
    let optional = |name: &str| -> Result<Value> {
        let p = dir.join(name);
        if p.is_file() {
            read_json(&p)
        } else {
            Ok(Value::Null)
        }
    };

    let mut stage_files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("diagnostics_stage") && n.ends_with(".csv"))
        })
        .collect();
    stage_files.sort();
    let expected = continuation
        .get("per_eps")
        .and_then(Value::as_array)
        .map_or(0, Vec::len);
    if stage_files.len() != expected {
        return Err(Error::MissingArtifact(dir.join(format!(
            "diagnostics_stage{:02}.csv",
            stage_files.len()
        ))));
    }
    let mut merged = String::from("stage,step,t,sup_u,sup_ut,energy_eps,dissipation_cum\n");
    let mut stages = Vec::new();
    for (i, path) in stage_files.iter().enumerate() {
        let text = fs::read_to_string(path)?;
        let mut rows = 0usize;
        let mut last: Option<Vec<f64>> = None;
        for line in text.lines().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            merged.push_str(&format!("{i},{line}\n"));
            rows += 1;
            let parsed: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|c| c.trim().parse::<f64>()).collect();
            last = Some(parsed.map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?);
        }
        let final_row = last.map(|r| {
            json!({
                "step": r[0], "t": r[1], "sup_u": r[2], "sup_ut": r[3],
                "energy_eps": r[4], "dissipation_cum": r[5],
            })
        });
        stages.push(json!({"stage": i, "rows": rows, "final": final_row}));
    }
    fs::write(dir.join("diagnostics.csv"), merged)?;

    let mut files = BTreeMap::new();
    for name in ["ubar.csv", "phi.csv", "u0.csv", "barrier.json", "attainment.json", "time_sequence.json", "functionals.json", "perimeter_checks.json"] {
        let p = dir.join(name);
        if p.is_file() {
            files.insert(name.to_string(), json!(sha256_hex(&fs::read(&p)?)));
        }
    }
    let attainment = optional("attainment.json")?;
    let attainment_summary = if attainment.is_null() {
        Value::Null
    } else {
        json!({
            "attained": attainment["attained"],
            "detached": attainment["detached"],
            "uncertified": attainment["uncertified"],
            "attained_tol": attainment["attained_tol"],
        })
    };
    let barrier = optional("barrier.json")?;
    let barrier_summary = if barrier.is_null() {
        Value::Null
    } else {
        let mut b = barrier.clone();
        if let Value::Object(m) = &mut b {
            let points = m.remove("points").and_then(|p| p.as_array().map(Vec::len)).unwrap_or(0);
            m.insert("points_checked".into(), json!(points));
        }
        b
    };
    let report = json!({
        "schema": REPORT_SCHEMA_ID,
        "continuation": continuation,
        "diagnostics": { "stages": stages, "merged_csv": "diagnostics.csv" },
        "attainment": attainment_summary,
        "barrier": barrier_summary,
        "functionals": optional("functionals.json")?,
        "time_sequence": optional("time_sequence.json")?,
        "perimeter_checks": optional("perimeter_checks.json")?,
        "files": files,
    });
    let path = dir.join("report.json");
    write_json(&path, &report)?;
    write_manifest(dir)?;
    Ok(path)
}

/// JSON Schema (draft 2020-12 subset) that `report.json` satisfies.
pub fn report_schema() -> Value {
    let num_or_null = json!({"type": ["number", "null"]});
    json!({
        "$schema": "http://json-schema.org/draft-07/schema#",
        "$id": format!("urn:{REPORT_SCHEMA_ID}"),
        "type": "object",
        "required": ["schema", "continuation", "diagnostics", "files"],
        "properties": {
            "schema": {"type": "string", "const": REPORT_SCHEMA_ID},
            "continuation": {
                "type": "object",
                "required": ["eps_schedule", "per_eps", "cauchy_gaps", "trace_error", "converged", "warm_start"],
                "properties": {
                    "eps_schedule": {"type": "array", "items": {"type": "number"}},
                    "cauchy_gaps": {"type": "array", "items": {"type": "number"}},
                    "trace_error": {"type": "number"},
                    "time_uniqueness_gap": num_or_null,
                    "converged": {"type": "boolean"},
                    "warm_start": {"type": "boolean"},
                    "per_eps": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["eps", "steps", "t_final", "final_sup_ut", "converged", "dissipation"],
                            "properties": {
                                "eps": {"type": "number"},
                                "steps": {"type": "integer"},
                                "t_final": {"type": "number"},
                                "final_sup_ut": {"type": "number"},
                                "converged": {"type": "boolean"},
                                "dissipation": {"type": "number"}
                            }
                        }
                    }
                }
            },
            "diagnostics": {
                "type": "object",
                "required": ["stages", "merged_csv"],
                "properties": {
                    "merged_csv": {"type": "string"},
                    "stages": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["stage", "rows", "final"],
                            "properties": {
                                "stage": {"type": "integer"},
                                "rows": {"type": "integer"},
                                "final": {"type": ["object", "null"]}
                            }
                        }
                    }
                }
            },
            "attainment": {"type": ["object", "null"]},
            "barrier": {"type": ["object", "null"]},
            "functionals": {"type": ["object", "null"]},
            "time_sequence": {"type": ["object", "null"]},
            "perimeter_checks": {"type": ["object", "null"]},
            "files": {"type": "object", "additionalProperties": {"type": "string"}}
        }
    })
}

/// Convenience for callers holding an already-built report.
pub fn attainment_counts(rep: &AttainmentReport) -> (usize, usize, usize) {
    (rep.attained, rep.detached, rep.uncertified)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config_json(extra: &str) -> String {
        format!(
            r#"{{
                "chart": {{"kind": "euclidean", "n": 2, "box": [[0, 1], [0, 1]]}},
                "h": 0.125,
                "phi": 1.5,
                "flow": {{"t_end": 2.0}},
                "schedule": {{"eps": [0.01]}}{extra}
            }}"#
        )
    }

    #[test]
    fn config_round_trip_and_validation() {
        let cfg: ExperimentConfig = serde_json::from_str(&config_json("")).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.threads, 1);
        let bad: ExperimentConfig =
            serde_json::from_str(&config_json("").replace(r#""t_end": 2.0"#, r#""cfl": 1.5"#)).unwrap();
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        assert!(serde_json::from_str::<ExperimentConfig>(&config_json(r#", "bogus": 1"#)).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(
            exit_code(&Error::Estimate {
                name: "ut_bound",
                step: 1,
                observed: 1.0,
                bound: 0.5
            }),
            EXIT_ESTIMATE
        );
        assert_eq!(
            exit_code(&Error::NotConverged { eps: 0.1, t_end: 1.0 }),
            EXIT_NOT_CONVERGED
        );
    }

    #[test]
    fn sorted_json() {
        let s = to_sorted_json(&json!({"b": 1, "a": {"d": 2, "c": 3}})).unwrap();
        assert!(s.find("\"a\"").unwrap() < s.find("\"b\"").unwrap());
        assert!(s.find("\"c\"").unwrap() < s.find("\"d\"").unwrap());
        assert!(s.ends_with("}\n"));
    }
}
