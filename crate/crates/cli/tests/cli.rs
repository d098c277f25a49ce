use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_margin-adapt"));
    c.env_remove("MARGIN_ADAPT_OUT");
    c
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().args(args).arg("--out").arg(dir).output().expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn same_seed_gives_identical_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        let out = run_in(dir, &["counterexample", "--n", "16,64", "--reps", "300", "--seed", "5"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let out = run_in(dir, &["nested", "--n", "128", "--reps", "20", "--seed", "5"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["counterexample.csv", "nested.csv"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name} differs between runs");
    }
}

#[test]
fn binomial_floor_writes_one_row_per_n() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["binomial-floor", "--n-list", "16,64,256,1024", "--a", "1", "--b", "1", "--c", "0.4"]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("binomial-floor.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5, "{csv}");
    assert!(lines[0].starts_with('n'));
    let summary = json(&dir.path().join("binomial-floor.json"));
    assert_eq!(summary["schema"], 1);
}

#[test]
fn usage_errors_exit_with_one() {
    let out = bin().args(["counterexample", "--reps", "10"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["no-such-command"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["binomial-floor", "--n-list", "16", "--c", "0.7"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("assumptions_ok"));
}

#[test]
fn auto_confidence_level() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["nested", "--n", "64", "--reps", "5", "--t", "auto"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let t = json(&dir.path().join("nested.json"))["t"].as_f64().unwrap();
    assert!((t - (4f64.ln() + 3.0 * 64f64.ln())).abs() < 1e-12);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .env("MARGIN_ADAPT_OUT", dir.path())
        .args(["margin-gap", "--n-list", "256,1024"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let s = json(&dir.path().join("margin-gap.json"));
    assert_eq!(s["passed"], true);
}

#[test]
fn export_prints_instance_json() {
    let out = bin().args(["export", "--instance", "counterexample", "--n", "8"]).output().unwrap();
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.is_object());
}

#[cfg(unix)]
#[test]
fn external_rule_subprocess() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["counterexample", "--n", "16", "--reps", "40", "--replay-reps", "2", "--out"])
        .arg(dir.path())
        .args(["--rule-cmd", "sh", "-c", "cat >/dev/null; echo 1"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(&dir.path().join("counterexample.json"));
    // always choosing model 1 never fails under P1
    assert_eq!(s["blocks"][0]["failures"], 0);
    assert_eq!(s["replay"][0]["identical"], true);
}
