//! End-to-end runs of the `qecsense` binary.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use qecsense::analysis::fit_fringe;

const BASE: &str = r#"
schema_version = 1
kind = "virtual_phase"
seed = 5

[config]
m = 1
n = 3
tau_int = 14.3e-6
phi0_points = 16

[config.imperfections]
eps_qec = 0.03
eps_readout = 0.01
eps_reset = 0.02

[virtual_phase]
rounds = [1, 4]
"#;

fn qecsense(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qecsense"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_manifest(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn run_into(manifest: &str, out_dir: &Path, extra: &[&str]) -> (Vec<u8>, Vec<u8>) {
    let mut args = vec!["run", manifest, "--output-dir", out_dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = qecsense(&args);
    assert!(out.status.success(), "{}", stderr(&out));
    (
        std::fs::read(out_dir.join("results.csv")).unwrap(),
        std::fs::read(out_dir.join("summary.toml")).unwrap(),
    )
}

#[test]
fn unknown_key_fails_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_manifest(
        dir.path(),
        &BASE.replace("phi0_points = 16", "phi0_points = 16\ntau_intt = 1e-6"),
    );
    let out = qecsense(&["validate", &path]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("tau_intt"), "{}", stderr(&out));
}

#[test]
fn exact_mode_rejects_long_sequences() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_manifest(
        dir.path(),
        &BASE.replace("rounds = [1, 4]", "rounds = [1, 20]"),
    );
    let out = qecsense(&["run", &path, "--output-dir", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(
        stderr(&out).contains("exact branching over 20 rounds"),
        "{}",
        stderr(&out)
    );
    assert!(!dir.path().join("results.csv").exists());
}

#[test]
fn negative_interval_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_manifest(
        dir.path(),
        &BASE.replace("tau_int = 14.3e-6", "tau_int = -1e-6"),
    );
    let out = qecsense(&["validate", &path]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("tau"), "{}", stderr(&out));
}

#[test]
fn validate_reports_ok() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_manifest(dir.path(), BASE);
    let out = qecsense(&["validate", &path]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("ok"));
    assert!(text.contains("virtual_phase"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_manifest(dir.path(), BASE);
    let a = run_into(&path, &dir.path().join("a"), &[]);
    let b = run_into(&path, &dir.path().join("b"), &["--threads", "1"]);
    assert_eq!(a, b);

    let s1 = run_into(&path, &dir.path().join("s1"), &["--sampled", "3000"]);
    let s2 = run_into(
        &path,
        &dir.path().join("s2"),
        &["--sampled", "3000", "--threads", "2"],
    );
    assert_eq!(s1, s2);
    let s3 = run_into(
        &path,
        &dir.path().join("s3"),
        &["--sampled", "3000", "--seed", "6"],
    );
    assert_ne!(s1.0, s3.0);
}

#[test]
fn results_round_trip_to_summary() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_manifest(dir.path(), BASE);
    let (csv_bytes, summary_bytes) = run_into(&path, dir.path(), &[]);

    // (strategy, rounds) -> φ₀ -> Σ_j P(g, j)
    let mut merged: BTreeMap<(String, i64), BTreeMap<u64, (f64, f64)>> = BTreeMap::new();
    let mut reader = csv::Reader::from_reader(csv_bytes.as_slice());
    for row in reader.records() {
        let row = row.unwrap();
        if &row[5] != "g" {
            continue;
        }
        let phi0: f64 = row[3].parse().unwrap();
        let p: f64 = row[6].parse().unwrap();
        let slot = merged
            .entry((row[0].to_string(), row[1].parse().unwrap()))
            .or_default()
            .entry(phi0.to_bits())
            .or_insert((phi0, 0.0));
        slot.1 += p;
    }

    let summary: toml::Table =
        toml::from_str(std::str::from_utf8(&summary_bytes).unwrap()).unwrap();
    let runs = summary["runs"].as_array().unwrap();
    assert_eq!(runs.len(), merged.len());
    for run in runs {
        let key = (
            run["strategy"].as_str().unwrap().to_string(),
            run["rounds"].as_integer().unwrap(),
        );
        let points: Vec<(f64, f64)> = merged[&key].values().copied().collect();
        let phi0: Vec<f64> = points.iter().map(|x| x.0).collect();
        let p: Vec<f64> = points.iter().map(|x| x.1).collect();
        let fit = fit_fringe(&phi0, &p).unwrap();
        let get = |k: &str| run[k].as_float().unwrap();
        assert!((fit.a - get("A")).abs() < 1e-12, "{key:?}");
        assert!((fit.b - get("B")).abs() < 1e-12, "{key:?}");
        assert!((fit.phi - get("phi_rad")).abs() < 1e-12, "{key:?}");
    }
}
