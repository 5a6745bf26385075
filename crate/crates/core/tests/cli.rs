use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const FAST: &[&str] = &["--override", "grid.nz=60", "--override", "grid.dt=1.0"];

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oam-memory"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn bad_override_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["threshold", "--override", "ensemble.peak_odd=1"]);
    assert_eq!(o.status.code(), Some(2));
    let err = json(&dir.path().join("error.json"));
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("ensemble"));
    assert!(!dir.path().join("threshold.json").exists());
}

#[test]
fn unstable_grid_exits_with_numeric_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["simulate", "--override", "grid.dt=20"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(json(&dir.path().join("error.json"))["error"], "stability");
}

#[test]
fn missing_config_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--config", "/nonexistent/c.json", "threshold"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn empty_medium_stores_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate", "--od", "0"];
    args.extend(FAST);
    let o = run(dir.path(), &args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&dir.path().join("memory_result.json"));
    assert_eq!(r["result"]["memory"]["se"], 0.0);
    assert_eq!(r["config"]["od_override"], 0.0);
    for f in ["retrieved_waveform.csv", "exit_waveform.csv", "histogram.csv", "resolved_config.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    assert_eq!(csv_lines(&dir.path().join("exit_waveform.csv"))[0], "t_ns,re,im,intensity");
}

#[test]
fn oam_scan_down_to_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["scan-oam", "--l-max", "0"];
    args.extend(FAST);
    assert!(run(dir.path(), &args).status.success());
    let lines = csv_lines(&dir.path().join("scan_oam.csv"));
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "l,od_eff,se,error");
    assert!(lines[1].starts_with("0,"));
}

#[test]
fn empty_threshold_list_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(dir.path(), &["threshold", "--override", "threshold.nbar=[]"]).status.success());
    assert_eq!(csv_lines(&dir.path().join("threshold.csv")), ["nbar,f_coh"]);
}

#[test]
fn threshold_values() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(dir.path(), &["threshold", "--nbar", "0.5"]).status.success());
    let r = json(&dir.path().join("threshold.json"));
    let row = &r["result"][0];
    assert!((row["f_coh"].as_f64().unwrap() - 0.687759).abs() < 1e-6, "{r}");
}

#[test]
fn same_seed_same_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["tomography", "--state", "D", "--seed", "42", "--override", "tomography.resamples=200"];
    assert!(run(a.path(), &args).status.success());
    assert!(run(b.path(), &args).status.success());
    for f in ["tomography.json", "counts.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let c = tempfile::tempdir().unwrap();
    let mut other = args;
    other[4] = "43";
    assert!(run(c.path(), &other).status.success());
    assert_ne!(
        std::fs::read(a.path().join("counts.csv")).unwrap(),
        std::fs::read(c.path().join("counts.csv")).unwrap()
    );
}

#[test]
fn replay_reproduces_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let mut args = vec!["scan", "--param", "od", "--values", "0,15,40"];
    args.extend(FAST);
    assert!(run(a.path(), &args).status.success());
    let result = a.path().join("scan.json");
    let o = run(b.path(), &["replay", result.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["scan.json", "scan.csv", "resolved_config.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}
