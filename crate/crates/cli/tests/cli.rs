//! End-to-end tests of the `wavebound` binary: exit codes, output layout,
//! provenance line, and byte-stability across thread counts.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wavebound"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

#[test]
fn fib_level_eight_lists_34_sorted_bands() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["fib", "--lambda", "10", "--bands", "8"]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let summary = stdout_json(&out);
    assert_eq!(summary["experiment"], "fib");
    assert_eq!(summary["rows"], 34);
    assert_eq!(summary["summary"]["bands_at_level"], 34);
    assert_eq!(summary["summary"]["counts_verified"], true);

    let csv = std::fs::read_to_string(dir.path().join("fib.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("# config_sha256="), "provenance line: {}", lines[0]);
    assert!(lines[0].contains(" version="));
    assert_eq!(lines[1], "level,index,band_type,lo,hi,width");
    assert_eq!(lines.len(), 2 + 34);

    let mut prev = f64::NEG_INFINITY;
    for row in &lines[2..] {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells[0], "8");
        assert!(matches!(cells[2], "A" | "B"), "band type {}", cells[2]);
        let lo: f64 = cells[3].parse().unwrap();
        let hi: f64 = cells[4].parse().unwrap();
        assert!(lo > prev && hi > lo, "bands out of order at lo = {lo}");
        prev = hi;
    }
}

#[test]
fn verify_mainm_on_free_operator_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["verify", "--suite", "mainm", "--op", "free", "--samples", "8"],
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let summary = stdout_json(&out);
    assert_eq!(summary["summary"]["pass"], true);
    assert_eq!(summary["summary"]["violations"], 0);
    let per_sample = summary["summary"]["per_sample"].as_array().unwrap();
    assert_eq!(per_sample.len(), 8);
    for s in per_sample {
        for key in ["jlb", "betam", "startm", "bigtwo"] {
            assert_eq!(s[key], true, "inequality {key} at {s}");
        }
    }
    // verify writes no CSV unless asked.
    assert!(!dir.path().join("verify.csv").exists());
}

#[test]
fn malformed_config_exits_2_without_output_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"grids":{"time":{"start":-5.0,"stop":10.0,"count":3,"spacing":"linear"},
            "length":{"start":5.0,"stop":5.0,"count":1,"spacing":"linear"}}}"#,
    )
    .unwrap();
    let out = run_in(
        dir.path(),
        &["profile", "--op", "free", "--config", "run.json", "--out", "p.csv"],
    );
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["exit"], 2);
    assert_eq!(err["error"]["kind"], "validation");
    assert!(!dir.path().join("p.csv").exists(), "no file may be written on rejection");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"gridz":{}}"#).unwrap();
    let out = run_in(dir.path(), &["scales", "--config", "run.json"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(
        err["error"]["message"].as_str().unwrap().contains("unknown field"),
        "message: {}",
        err["error"]["message"]
    );
}

#[test]
fn experiment_name_in_config_must_match_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"experiment":"scales"}"#).unwrap();
    let out = run_in(dir.path(), &["fib", "--config", "run.json", "--lambda", "10", "--bands", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn csv_bytes_are_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = [
        "scales", "--op", "fibonacci", "--lambda", "5",
        "--energy", "-2:2:5", "--epsilon", "1e-2:1e-1:2:log",
    ];
    let a = run_in(dir.path(), &[&sweep[..], &["--threads", "1", "--out", "a.csv"]].concat());
    let b = run_in(dir.path(), &[&sweep[..], &["--threads", "3", "--out", "b.csv"]].concat());
    assert!(a.status.success() && b.status.success());
    let bytes_a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let bytes_b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(bytes_a, bytes_b, "thread count leaked into output bytes");
    // 5 energies × 2 epsilons plus provenance and header lines.
    assert_eq!(bytes_a.iter().filter(|&&c| c == b'\n').count(), 12);
}

#[test]
fn help_and_version_exit_zero() {
    let help = bin().arg("--help").output().unwrap();
    assert!(help.status.success());
    assert!(String::from_utf8_lossy(&help.stdout).contains("wavebound"));
    let version = bin().arg("--version").output().unwrap();
    assert!(version.status.success());
}

#[test]
fn summary_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(
        dir.path(),
        &["fib", "--lambda", "8", "--bands", "4", "--summary", "s.json"],
    );
    assert!(out.status.success());
    let file = std::fs::read_to_string(dir.path().join("s.json")).unwrap();
    assert_eq!(file.trim_end(), String::from_utf8_lossy(&out.stdout).trim_end());
}
