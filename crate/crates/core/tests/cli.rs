use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};

fn shipped(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn pdm(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_pdm")).args(args).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap_or(-1), text)
}

#[test]
fn constant_strong_rate_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", &shipped("strong-rate-constant.json"));
    let out = tmp.path().join("out");
    let (code, text) = pdm(&["strong-rate", "--config", cfg.to_str().unwrap(), "--check", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{text}");
    let csv = fs::read_to_string(out.join("rates.csv")).unwrap();
    assert!(csv.starts_with("level,steps,error,stderr\n"));
    assert!(!csv.contains('\r'));
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["exact"], json!(true));
    assert_eq!(summary["seed"], json!(11));
    assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);
    assert!(summary["version"].as_str().unwrap().starts_with('v'));
    assert!(summary["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
    let sidecar: Value = serde_json::from_str(&fs::read_to_string(out.join("rates.json")).unwrap()).unwrap();
    assert_eq!(sidecar["config_hash"], summary["config_hash"]);
}

#[test]
fn outputs_do_not_depend_on_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = shipped("ellipticity-check.json");
    c["num_paths"] = json!(300);
    c["steps"] = json!(16);
    let cfg = write_config(tmp.path(), "e.json", &c);
    let mut files = Vec::new();
    for w in ["1", "4"] {
        let out = tmp.path().join(format!("w{w}"));
        let (code, text) = pdm(&["ellipticity-check", "--config", cfg.to_str().unwrap(), "--workers", w, "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0, "{text}");
        files.push(fs::read(out.join("determinants.csv")).unwrap());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = shipped("strong-rate-constant.json");
    c["unexpected"] = json!(1);
    let cfg = write_config(tmp.path(), "bad.json", &c);
    assert_eq!(pdm(&["strong-rate", "--config", cfg.to_str().unwrap()]).0, 2);
    let good = write_config(tmp.path(), "good.json", &shipped("strong-rate-constant.json"));
    assert_eq!(pdm(&["ibp-check", "--config", good.to_str().unwrap()]).0, 2);
    assert_eq!(pdm(&["strong-rate", "--config", tmp.path().join("missing.json").to_str().unwrap()]).0, 2);
}

#[test]
fn infeasible_requests_exit_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = shipped("density-rate.json");
    c["method"] = json!("ibp");
    c["reference_level"] = json!(5);
    c["num_paths"] = json!(200);
    let cfg = write_config(tmp.path(), "ibp.json", &c);
    let (code, text) = pdm(&["density-rate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code, 3, "{text}");
}

#[test]
fn failed_thresholds_exit_with_four_only_under_check() {
    let tmp = tempfile::tempdir().unwrap();
    let mut c = shipped("ibp-check.json");
    c["num_paths"] = json!(2000);
    c.as_object_mut().unwrap().remove("center_paths");
    c["check"] = json!({"max_z": 1e-9});
    let cfg = write_config(tmp.path(), "z.json", &c);
    let out = tmp.path().join("o");
    let args = ["ibp-check", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    assert_eq!(pdm(&args).0, 0);
    let mut checked = args.to_vec();
    checked.push("--check");
    let (code, text) = pdm(&checked);
    assert_eq!(code, 4, "{text}");
    assert!(text.contains("FAIL max_z"));
}
