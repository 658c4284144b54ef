use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rmst-eval"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("RMST_EVAL_THREADS").output().unwrap()
}

fn report(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/gbcsg_synthetic.csv")
}

fn scheme_b(dir: &Path) -> String {
    let path = dir.join("b.csv");
    let out = run(&["simulate", "--scheme", "B", "--n", "1000", "--seed", "7", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    path.to_str().unwrap().to_string()
}

#[test]
fn simulate_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = scheme_b(dir.path());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("time,status,z1,z2,z3"));
    assert_eq!(lines.count(), 1000);
}

#[test]
fn evaluate_reports_fold_values() {
    let dir = tempfile::tempdir().unwrap();
    let data = scheme_b(dir.path());
    let r = report(&[
        "evaluate", "--data", &data, "--model", "cox", "--censoring", "km", "--tau", "auto90", "--folds", "20",
        "--seed", "7",
    ]);
    assert_eq!(r["command"], "evaluate");
    assert_eq!(r["results"]["fold_values"].as_array().unwrap().len(), 20);
    assert!(r["results"]["wrss"].is_f64());
    assert_eq!(r["params"]["folds"], 20);
    assert_eq!(r["params"]["model"], "cox");
}

#[test]
fn loco_global_reports_each_variable() {
    let dir = tempfile::tempdir().unwrap();
    let data = scheme_b(dir.path());
    let r = report(&["loco", "global", "--data", &data, "--model", "cox", "--vars", "1,2,3", "--alpha", "0.1", "--seed", "7"]);
    let tests = r["results"]["tests"].as_array().unwrap();
    assert_eq!(tests.len(), 3);
    for t in tests {
        for key in ["statistic", "p_value", "ci"] {
            assert!(t.get(key).is_some(), "missing {key}");
        }
    }
    assert!(tests[0]["p_value"].as_f64().unwrap() < 0.01);
}

#[test]
fn identical_arguments_give_identical_reports() {
    let args = ["multisplit", "--data", fixture().to_str().unwrap(), "--model", "pseudo-lm", "--splits", "4", "--seed", "3"]
        .map(String::from);
    let a = bin().args(&args).arg("--threads").arg("1").output().unwrap();
    let b = bin().args(&args).env("RMST_EVAL_THREADS", "2").output().unwrap();
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let r: Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(r["results"].as_array().unwrap().len(), 8);
}

#[test]
fn conformal_commands() {
    let split = report(&["conformal", "split", "--scheme", "B", "--n", "600", "--holdout", "0.25", "--seed", "2"]);
    assert_eq!(split["results"]["intervals"].as_array().unwrap().len(), 150);
    assert!(split["results"]["latent_coverage"].is_f64());
    let roo = report(&["conformal", "roo", "--data", fixture().to_str().unwrap(), "--model", "km"]);
    assert_eq!(roo["results"]["intervals"].as_array().unwrap().len(), 686);
}

#[test]
fn loco_local_brackets_importance() {
    let r = report(&["loco", "local", "--scheme", "B", "--n", "400", "--vars", "1,2+3", "--seed", "5"]);
    let points = r["results"]["points"].as_array().unwrap();
    assert_eq!(points.len(), 200);
    for p in points {
        for w in p["importance"].as_array().unwrap() {
            assert!(w["lower"].as_f64().unwrap() <= w["upper"].as_f64().unwrap());
        }
    }
}

#[test]
fn report_goes_to_out_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = run(&["evaluate", "--scheme", "A1", "--n", "300", "--tau", "8.8", "--holdout", "0.3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(r["params"]["tau_value"], 8.8);
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        vec!["evaluate", "--data", "x.csv", "--scheme", "B"],
        vec!["evaluate", "--scheme", "B", "--bogus"],
        vec!["evaluate"],
        vec!["conformal", "split", "--scheme", "B"],
        vec!["loco", "global", "--scheme", "B", "--vars", "0"],
        vec!["loco", "global", "--scheme", "B", "--vars", "4"],
        vec!["evaluate", "--scheme", "B", "--tau", "soon"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn computation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "time,status,z1\n1.0,1,0.5\n2.0,3,0.1\n").unwrap();
    let out = run(&["evaluate", "--data", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    let out = run(&["evaluate", "--scheme", "B", "--n", "200", "--tau", "50"]);
    assert_eq!(out.status.code(), Some(1));
}
