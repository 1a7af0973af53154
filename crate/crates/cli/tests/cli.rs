use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn sgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgan")).args(args).output().unwrap()
}

fn ok_json(args: &[&str]) -> Value {
    let out = sgan(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const MU: &str = r#"{"dim":1,"band":2,"kind":"density","coeffs":[1.0,0.0,0.0]}"#;
const NU: &str = r#"{"dim":1,"band":2,"kind":"density","coeffs":[1.0,0.1,0.0]}"#;

#[test]
fn ipm_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let mu = write(dir.path(), "mu.json", MU);
    let nu = write(dir.path(), "nu.json", NU);
    let v = ok_json(&["ipm", p(&mu), p(&nu), "--beta", "2", "--L", "1"]);
    assert!((v["value"].as_f64().unwrap() - 0.05).abs() < 1e-12);
    let out = sgan(&["ipm", p(&mu), p(&nu), "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("key,value\n"));
    assert!(text.lines().any(|l| l.starts_with("value,")));
}

#[test]
fn sample_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let nu = write(dir.path(), "nu.json", NU);
    let csv = dir.path().join("s.csv");
    let out = sgan(&["sample", p(&nu), "--n", "500", "--seed", "3", "--format", "csv", "--out", p(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 501);
    let again = dir.path().join("t.csv");
    sgan(&["sample", p(&nu), "--n", "500", "--seed", "3", "--format", "csv", "--out", p(&again)]);
    assert_eq!(std::fs::read_to_string(&again).unwrap(), text);
    let e = ok_json(&["estimate", p(&csv), "--M", "2", "--K", "4"]);
    assert_eq!(e["metadata"]["M"], 2);
    let c = e["field"]["coeffs"].as_array().unwrap();
    assert_eq!(c.len(), 5);
    assert!((c[1].as_f64().unwrap() - 0.1).abs() < 0.15);
}

#[test]
fn rate_report_rows_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "rate.cfg",
        "n_grid = 64,128,256\nreplicates = 10\ntruth = uniform\ntruth_band = 256\ncutoff_constant = 0.1\n",
    );
    let out = sgan(&["rate", p(&cfg), "--format", "csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 4);
    let a = ok_json(&["rate", p(&cfg), "--seed", "5"]);
    assert_eq!(a["seed"], 5);
    assert_eq!(ok_json(&["rate", p(&cfg), "--seed", "5"]), a);
    let paired = ok_json(&["rate", p(&cfg), "--paired"]);
    assert!(paired["win_fraction_at_largest_n"].is_number());
}

#[test]
fn rate_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.cfg", "n_grid = 256,128\n");
    let out = sgan(&["rate", p(&cfg)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_grid"));
}

#[test]
fn gan_with_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let nu = write(dir.path(), "nu.json", NU);
    let v = ok_json(&["gan", p(&nu), "--alpha-g", "1", "--radius-g", "1.001", "--truth", p(&nu)]);
    assert!(v["oracle"]["holds"].as_bool().unwrap());
    assert!(v["solution"]["lambda"].as_f64().unwrap() > 0.0);
    let bad = sgan(&["gan", p(&nu), "--radius-g", "0.5"]);
    assert!(!bad.status.success());
}

#[test]
fn lowerbound_families() {
    let v = ok_json(&["lowerbound", "--M", "7", "--n", "10"]);
    assert_eq!(v["manifest"]["kind"], "frequency");
    assert_eq!(v["manifest"]["pairs"]["violations"], 0);
    assert!(v["fano"]["probability"].is_number());
    let s = ok_json(&["lowerbound", "--family", "spatial", "--M", "8", "--grid", "500"]);
    assert!(s["manifest"]["certificates"]["kl_chain_holds"].as_bool().unwrap());
}

#[test]
fn relu_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let net = write(
        dir.path(),
        "net.json",
        r#"{"dim":2,"depth":2,"V":1.0,"layers":[[{"x1":0.5,"x2":-0.5},{"one":1.0}],[{"u1.1":0.6,"u1.2":0.4}]]}"#,
    );
    let v = ok_json(&["relu", p(&net), "--n", "1e4"]);
    let tight = v["lipschitz"]["tight"].as_f64().unwrap();
    assert!((tight - 0.6).abs() < 1e-12);
    assert!(v["rates"]["chaining_exponent"].as_f64().unwrap() == 0.25);
    let bad = write(dir.path(), "bad.json", r#"{"dim":1,"depth":1,"V":1.0,"layers":[[{"x1":2.0}]]}"#);
    assert!(!sgan(&["relu", p(&bad)]).status.success());
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let mu = write(dir.path(), "mu.json", MU);
    let target = dir.path().join("ipm.json");
    let out = sgan(&["ipm", p(&mu), p(&mu), "--out", p(&target)]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(target).unwrap()).unwrap();
    assert_eq!(v["value"], 0.0);
}
