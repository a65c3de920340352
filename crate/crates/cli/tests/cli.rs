use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dioph_core::PointCloud;
use serde_json::Value;

fn dioph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dioph")).args(args).output().expect("binary runs")
}

fn run_config(sub: &str, toml: &str, dir: &Path) -> Output {
    let cfg = dir.join("exp.toml");
    fs::write(&cfg, toml).unwrap();
    let out = dir.join("out");
    dioph(&[sub, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "2"])
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap()
}

const CIRCLE: &str = r#"
kind = "count"
seed = 7

[set]
dim = 2
equations = ["x1^2 + x2^2 - 1"]
box = [["-1", "1"], ["-1", "1"]]

[count]
heights = [5, 13]
"#;

#[test]
fn malformed_config_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config("count", "kind = \"count\"\nseed = = 3\n", dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn unknown_field_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config("count", &format!("{CIRCLE}\nbogus = 1\n"), dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn kind_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config("cover", CIRCLE, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("out/report.json").exists());
}

#[test]
fn reports_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(run_config("count", CIRCLE, a.path()).status.success());
    assert!(run_config("count", CIRCLE, b.path()).status.success());
    let ra = fs::read(a.path().join("out/report.json")).unwrap();
    let rb = fs::read(b.path().join("out/report.json")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_config("count", CIRCLE, dir.path()).status.success());
    let text = fs::read_to_string(dir.path().join("out/count_H13.csv")).unwrap();
    let cloud = PointCloud::from_csv(&text, 13).unwrap();
    // (±1, 0), (0, ±1) and the eight sign patterns of (3/5, 4/5), (5/13, 12/13)
    assert_eq!(cloud.len(), 4 + 8 + 8);
    assert_eq!(cloud.to_csv(), text);
}

#[test]
fn empty_result_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CIRCLE.replace("x1^2 + x2^2 - 1", "x1^2 + x2^2 + 1");
    assert!(run_config("count", &cfg, dir.path()).status.success());
    let r = report(dir.path());
    let text = r.to_string();
    assert!(!text.contains("NaN"));
    let counts: Vec<u64> = r["results"]["counts"]
        .as_array()
        .unwrap_or_else(|| panic!("counts in {r}"))
        .iter()
        .map(|c| c["N"].as_u64().unwrap())
        .collect();
    assert_eq!(counts, vec![0, 0]);
}
