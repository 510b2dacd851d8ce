use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn timeop(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_timeop"));
    cmd.args(args).env_remove("TIMEOP_OUT");
    if let Some(dir) = env_out {
        cmd.env("TIMEOP_OUT", dir);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn galapon_compare_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "family = powerlaw a = 1 lambda = 2 b = 1\ndim = 64\n");
    let out = tmp.path().join("out");
    let o = timeop(&["galapon-compare", "--config", &cfg, "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["status"], "pass");
    assert_eq!(r["result"]["max_abs_diff"], 0.0);
    assert!(out.join("timing.json").exists());
}

#[test]
fn identity_check_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "family=powerlaw a=1 lambda=0.8 b=1\ndim=512\n");
    let o = timeop(&["identity-check", "--config", &cfg, "--out", tmp.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0));
    let r = report(tmp.path());
    let dev = r["result"]["symmetrized_vs_tf"]["max_abs_diff"].as_f64().unwrap();
    let scale = r["result"]["symmetrized_vs_tf"]["scale"].as_f64().unwrap();
    assert!(dev <= 1e-13 * scale);
}

#[test]
fn growing_scan_is_a_result_not_a_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "family=powerlaw a=1 lambda=0.6 b=1\ndims=32,64,128,256,512\n");
    let o = timeop(&["norm-scan", "--config", &cfg], Some(tmp.path()));
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(report(tmp.path())["result"]["verdict"], "growing");
    let csv = fs::read_to_string(tmp.path().join("norms.csv")).unwrap();
    assert!(csv.starts_with("dim,value\n32,"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn ccr_verify_writes_residuals() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "family=sqrtshift\ndim=64\nseeds=0,1,2\nm_cuts=16,32,64\n");
    let o = timeop(&["ccr-verify", "--config", &cfg, "--out", tmp.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(tmp.path().join("residuals.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("tag,support_max,residual"));
    assert_eq!(lines.count(), 7);
    let r = report(tmp.path());
    assert_eq!(r["result"]["domain_exact"], true);
    assert!(r["result"]["convergence"]["verdict"].is_string());
}

#[test]
fn reports_are_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "family=powerlaw a=1 lambda=1.5 b=1\ndims=16,32,64\n");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = timeop(&["norm-scan", "--config", &cfg, "--out", dir.to_str().unwrap()], None);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(b.join("report.json")).unwrap());
    assert_eq!(fs::read(a.join("norms.csv")).unwrap(), fs::read(b.join("norms.csv")).unwrap());
}

#[test]
fn failed_premise_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "family=powerlaw a=1 lambda=0.8 b=1\ndims=32,64\ngamma=1\nbeta_term=1\n");
    let out = tmp.path().to_str().unwrap();
    let o = timeop(&["kr-margin", "--config", &cfg, "--out", out, "--override", "gamma=1e-6"], None);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(report(tmp.path())["result"]["verdict"], "premise-fails");
    assert_eq!(report(tmp.path())["status"], "fail");
}

#[test]
fn class_check_reports_named_violation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "family=powerlaw a=1 lambda=0.8 b=1\nalpha=4\nn_max=200\nk_max=200\n");
    let o = timeop(&["class-check", "--config", &cfg, "--out", tmp.path().to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    let conditions: Vec<String> = report(tmp.path())["result"]["m_beta"]["violations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["condition"].as_str().unwrap().to_string())
        .collect();
    assert!(conditions.contains(&"h_not_l1".to_string()), "{conditions:?}");
}

#[test]
fn errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let bad = write_config(tmp.path(), "dims=64,32\nlambda=abc\n");
    let o = timeop(&["norm-scan", "--config", &bad, "--out", out], None);
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("strictly increasing") && stderr.contains("malformed number"), "{stderr}");

    let missing = write_config(tmp.path(), "family=sqrtshift\n");
    assert_eq!(timeop(&["norm-scan", "--config", &missing, "--out", out], None).status.code(), Some(2));
    assert_eq!(timeop(&["no-such-command", "--config", &missing], None).status.code(), Some(2));
}
