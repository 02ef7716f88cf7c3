use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_cocycle-lab");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn error_object(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not a JSON error object ({e}): {stderr}"))
}

const LYAPUNOV: &str = r#"{"version": 1, "seed": 4, "shift": {"adjacency": [[1, 1], [1, 1]]},
  "cocycle": {"type": "constant", "matrix": [[2, 0], [0, 0.5]]},
  "experiment": {"kind": "lyapunov", "n": 40, "trials": 3}}"#;

#[test]
fn successful_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", LYAPUNOV);
    let out_dir = dir.path().join("out");
    let out = run(&["lyapunov", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--workers", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["result.json", "summary.json", "timing.json", "lyapunov.csv"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let first = fs::read(out_dir.join("result.json")).unwrap();
    let out = run(&["lyapunov", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--workers", "1"]);
    assert!(out.status.success());
    assert_eq!(fs::read(out_dir.join("result.json")).unwrap(), first);
}

#[test]
fn seed_override_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", LYAPUNOV);
    let out_dir = dir.path().join("out");
    let out = run(&["lyapunov", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--seed", "99"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&fs::read(out_dir.join("result.json")).unwrap()).unwrap();
    assert_eq!(v["config"]["seed"], 99);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", &LYAPUNOV.replace(r#""seed": 4,"#, ""));
    let out = run(&["lyapunov", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let e = error_object(&out);
    assert_eq!(e["error"]["category"], "config");
    assert_eq!(e["error"]["exit_code"], 2);

    let cfg = write(dir.path(), "ok.json", LYAPUNOV);
    let out = run(&["geometry", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_object(&out)["error"]["message"].as_str().unwrap().contains("subcommand"));
}

#[test]
fn numeric_failures_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"version": 1, "seed": 1, "shift": {"adjacency": [[1, 1], [1, 1]]},
      "potential": {"type": "edges", "values": [
        {"from": 0, "to": 0, "value": 1e300}, {"from": 0, "to": 1, "value": 0},
        {"from": 1, "to": 0, "value": 0}, {"from": 1, "to": 1, "value": 0}]},
      "cocycle": {"type": "identity", "d": 2},
      "experiment": {"kind": "validate"}}"#;
    let cfg = write(dir.path(), "c.json", text);
    let out = run(&["validate", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_object(&out)["error"]["category"], "numeric");
}

#[test]
fn io_errors_exit_one() {
    let out = run(&["validate", "--config", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_object(&out)["error"]["category"], "io");
}

#[test]
fn report_reemits_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &LYAPUNOV.replace("}}", r#"}, "output": {"dir": "unused", "csv": false}}"#));
    let run_dir = dir.path().join("run");
    let out = run(&["lyapunov", "--config", &cfg, "--out", run_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!run_dir.join("lyapunov.csv").exists());
    let out = run(&["report", "--input", run_dir.to_str().unwrap(), "--format", "both"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(run_dir.join("lyapunov.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}
