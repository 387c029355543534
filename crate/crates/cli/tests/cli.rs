use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fimsketch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fimsketch")).args(args).output().expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn unknown_key_and_bad_value_exit_with_config_error() {
    assert_eq!(fimsketch(&["run", "--bogus", "1"]).status.code(), Some(2));
    assert_eq!(fimsketch(&["run", "--nx", "1"]).status.code(), Some(2));
    assert_eq!(fimsketch(&["run", "/nonexistent/config.toml"]).status.code(), Some(2));
    assert_eq!(fimsketch(&["density", "--mode", "source-design", "--out", "x.csv"]).status.code(), Some(2));
}

#[test]
fn zero_iterations_leave_the_initial_design() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = fimsketch(&["run", "--nx", "10", "--c", "6", "--iters", "0", "--output", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = read(dir.path(), "trace.csv");
    assert_eq!(trace.lines().collect::<Vec<_>>(), ["iteration,Q,lambda_min,c_inv,frob_dev,accepted"]);
    let report = read(dir.path(), "report.csv");
    let rows: Vec<Vec<&str>> = report.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let init = rows.iter().find(|r| r[2] == "normal-init").unwrap();
    let last = rows.iter().find(|r| r[2] == "normal-eks").unwrap();
    assert_eq!(init[4..7], last[4..7]);
    assert!(dir.path().join("trajectory/step_000.csv").exists());
    assert!(!dir.path().join("trajectory/step_001.csv").exists());
}

#[test]
fn manifest_reruns_reproduce_artifacts() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let o = fimsketch(&[
        "run", "--nx", "10", "--c", "6", "--iters", "3", "--sampler", "cbs", "--seed", "9", "--output",
        first.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = first.path().join("manifest.toml");
    let o = fimsketch(&["run", manifest.to_str().unwrap(), "--output", second.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["density.csv", "trace.csv", "report.csv", "trajectory/step_003.csv"] {
        assert_eq!(read(first.path(), name), read(second.path(), name), "{name}");
    }
}

#[test]
fn density_command_writes_normalized_masses() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let o = fimsketch(&["density", "--scenario", "systemA", "--nx", "8", "--out", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("u_1,u_2,value"));
    let total: f64 = lines.map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
    assert_eq!(text.lines().count(), 50);
    assert!((total - 1.0).abs() < 1e-12);
}
