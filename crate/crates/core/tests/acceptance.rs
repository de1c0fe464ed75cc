//! Acceptance suite: criteria 1–12 in full mode in-process, criterion 13 as
//! two independent CLI runs whose bundles must agree byte for byte.
//! Prints one PASS/FAIL line per criterion; exits non-zero on any failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use graphflow::selftest::{self, criterion_name, CriterionResult, SelftestOptions};

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn cli_determinism() -> CriterionResult {
    let tmp = tempfile::tempdir().unwrap();
    let mut bundles = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_graphflow"))
            .args(["selftest", "--quick", "--out"])
            .arg(&out)
            .env_remove("GRAPHFLOW_OUT")
            .output()
            .unwrap();
        if !status.status.success() {
            return CriterionResult::new(
                13,
                criterion_name(13),
                false,
                1.0,
                0.0,
                format!("quick selftest run {run} exited with {:?}", status.status.code()),
            );
        }
        bundles.push(tree(&out));
    }
    let (a, b) = (&bundles[0], &bundles[1]);
    let differing = a
        .keys()
        .chain(b.keys())
        .filter(|k| a.get(*k) != b.get(*k))
        .collect::<std::collections::BTreeSet<_>>();
    CriterionResult::new(
        13,
        criterion_name(13),
        differing.is_empty() && !a.is_empty(),
        differing.len() as f64,
        0.0,
        format!("{} files per bundle compared byte for byte", a.len()),
    )
}

fn main() -> ExitCode {
    let opts = SelftestOptions::default();
    let mut results = Vec::new();
    for id in [1, 2, 3, 5, 6, 7, 8, 9, 10, 11, 12] {
        let t = Instant::now();
        for r in selftest::run_criterion(id, &opts) {
            println!("{} [{:.1}s]", r.line(), t.elapsed().as_secs_f64());
            results.push(r);
        }
    }
    let t = Instant::now();
    let r = cli_determinism();
    println!("{} [{:.1}s]", r.line(), t.elapsed().as_secs_f64());
    results.push(r);

    let failed: Vec<u32> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    println!("acceptance: {}/{} criteria passed", results.len() - failed.len(), results.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {failed:?}");
        ExitCode::FAILURE
    }
}
