//! End-to-end checks of the `rflvm` binary.

use std::path::Path;
use std::process::{Command, Output};

fn rflvm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rflvm")).args(args).output().expect("binary runs")
}

fn count_lines(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn simulate_then_fit_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let fit = dir.path().join("fit");
    let data_s = data.to_str().unwrap();
    let fit_s = fit.to_str().unwrap();

    let out = rflvm(&["simulate", "--n", "40", "--j", "6", "--kind", "poisson", "--seed", "3", "--out", data_s]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["Y.csv", "x_true.csv", "f_true.csv", "labels.csv", "config.ini"] {
        assert!(data.join(name).exists(), "missing {name}");
    }
    assert_eq!(count_lines(&data.join("Y.csv")), 40);

    let out = rflvm(&[
        "fit", "--data", data_s, "--out", fit_s, "--kind", "poisson", "--iterations", "6", "--burn-in", "2", "--m", "10",
        "--quiet",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["config.ini", "trace.txt", "x_mean.csv", "diagnostics.csv", "predictions.csv"] {
        assert!(fit.join(name).exists(), "missing {name}");
    }
    assert_eq!(count_lines(&fit.join("x_mean.csv")), 40);

    let truth = data.join("x_true.csv");
    let out = rflvm(&["evaluate", "r2", "--truth", truth.to_str().unwrap(), "--estimate", truth.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((report["mean"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn unsupported_kind_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = rflvm(&["simulate", "--kind", "cauchy", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("Y.csv"), "1,2\n3\n").unwrap();
    let out = rflvm(&[
        "fit", "--data", dir.path().to_str().unwrap(), "--out", dir.path().join("fit").to_str().unwrap(), "--quiet",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn selfcheck_passes() {
    let out = rflvm(&["selfcheck", "--seed", "0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.lines().count() >= 5 && text.lines().all(|l| l.contains(" PASS ")), "{text}");
}
