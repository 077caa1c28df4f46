use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use sbpm_workbench::RunReport;

fn sbpm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbpm"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn reproduce_ce1_exits_zero_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = sbpm(dir.path(), &["reproduce", "ce1", "--out", "o", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json = std::fs::read_to_string(dir.path().join("o/ce1.json")).unwrap();
    let report = RunReport::from_json(&json).unwrap();
    assert!(report.passed());
    assert_eq!(report.seed, 3);
    let csv = std::fs::read_to_string(dir.path().join("o/ce1.csv")).unwrap();
    assert!(csv.starts_with("experiment,cell,metric,value"));
}

#[test]
fn reports_are_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for o in ["a", "b"] {
        assert!(sbpm(dir.path(), &["reproduce", "ce2", "--reps", "3", "--out", o]).status.success());
    }
    let read = |o: &str| std::fs::read(dir.path().join(o).join("ce2.json")).unwrap();
    assert_eq!(read("a"), read("b"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sbpm(dir.path(), &["reproduce", "ce9"]).status.code(), Some(2));
    assert_eq!(sbpm(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(sbpm(dir.path(), &["attack", "reconsyn", "--epsilon=-1"]).status.code(), Some(2));
    std::fs::write(dir.path().join("bad.toml"), "rows = \"many\"\n").unwrap();
    assert_eq!(sbpm(dir.path(), &["--config", "bad.toml", "sweep", "dp"]).status.code(), Some(2));
}

#[test]
fn failed_checks_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    // one rep cannot show both flip directions
    let out = sbpm(dir.path(), &["reproduce", "ce5", "--reps", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("[FAILED]"));
}

#[test]
fn data_pipeline_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(sbpm(d, &["data", "gen", "--dataset", "gauss", "--rows", "200", "--out", "d"]).status.success());
    assert!(sbpm(d, &["data", "split", "d/data.csv", "--out", "d"]).status.success());
    assert!(sbpm(d, &["data", "discretize", "d/data.csv", "--bins", "4", "--strategy", "quantile", "--out", "d"])
        .status
        .success());
    let binned = sbpm_core::tabular::read_csv(d.join("d/discretized.csv")).unwrap();
    assert_eq!(binned.len(), 200);
    assert!(binned.schema().all_categorical());
    let out = sbpm(
        d,
        &["metrics", "report", "--train", "d/train.csv", "--test", "d/test.csv", "--synth", "d/test.csv", "--out", "d"],
    );
    assert!(out.status.success());
    let report: sbpm_core::metrics::PrivacyReport = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report.all_pass);
}

#[test]
fn reconsyn_writes_attack_result_json() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("spec.toml"), "name = \"small\"\nrows = 2000\nrounds = 50\n").unwrap();
    let out = sbpm(
        dir.path(),
        &["--config", "spec.toml", "attack", "reconsyn", "--target", "outliers", "--out", "r"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("r/small.attack.json")).unwrap();
    let result: sbpm_attacks::reconsyn::AttackResult = serde_json::from_str(&text).unwrap();
    assert_eq!(result.config.rounds, 50);
}

#[test]
fn provider_serve_prints_the_bound_port() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_sbpm"))
        .args(["provider", "serve", "--bind", "127.0.0.1:0", "--model", "random"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    let port: u16 = line.trim().rsplit(':').next().unwrap().parse().unwrap();
    assert!(port > 0, "{line}");
}

#[test]
fn report_render_reads_saved_json() {
    let dir = tempfile::tempdir().unwrap();
    assert!(sbpm(dir.path(), &["reproduce", "ce1", "--out", "o"]).status.success());
    let out = sbpm(dir.path(), &["report", "render", "o/ce1.json"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("[ok] all_pass"));
}
