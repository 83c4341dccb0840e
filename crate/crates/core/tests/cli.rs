use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_sparselut");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("SPARSELUT_THREADS", "2").output().expect("spawn binary")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, fanin: usize) -> String {
    let path = dir.join("cfg.json");
    let json = format!(
        r#"{{
  "dataset": "synthetic",
  "synthetic_side": 8,
  "synthetic_classes": 2,
  "synthetic_train": 120,
  "synthetic_test": 60,
  "widths": [64, 8, 2],
  "fanin": [{fanin}],
  "bits": 2,
  "mask_epochs": 4,
  "phase_boundary_epochs": 3,
  "retrain_epochs": 3,
  "batch_size": 16
}}"#
    );
    std::fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, 3);
    let mask = d.join("sparselut.mask");
    let model = d.join("model.json");
    let rtl = d.join("rtl");

    let stdout = ok(&["derive-mask", "--config", &cfg, "--out", p(&mask)]);
    assert!(stdout.starts_with("density "));
    assert!(std::fs::read_to_string(&mask).unwrap().starts_with("SPARSELUT-MASK v1"));

    let stdout = ok(&["retrain", "--config", &cfg, "--mask", p(&mask), "--out", p(&model)]);
    assert!(stdout.contains("best test accuracy"));

    let stdout = ok(&["compile-rtl", "--model", p(&model), "--outdir", p(&rtl)]);
    assert!(stdout.contains("pipeline depth 2"));
    for f in ["layer0.v", "layer1.v", "top.v", "tables/0_0.tbl", "tables/1_1.tbl"] {
        assert!(rtl.join(f).is_file(), "missing {f}");
    }

    let heat = d.join("heat.csv");
    ok(&["heatmap", "--mask", p(&mask), "--out", p(&heat)]);
    let grid = std::fs::read_to_string(&heat).unwrap();
    assert_eq!(grid.lines().count(), 8);
    let total: f64 = grid.lines().flat_map(|l| l.split(',')).map(|v| v.trim().parse::<f64>().unwrap()).sum();
    assert_eq!(total, 8.0 * 3.0);
    ok(&["heatmap", "--model", p(&model), "--out", p(&d.join("weights.csv"))]);

    let report = d.join("report");
    let stdout = ok(&["report", "--config", &cfg, "--modes", "random,sparselut", "--seeds", "1", "--out", p(&report)]);
    assert!(stdout.starts_with("mode,seed,best_accuracy"));
    assert_eq!(stdout.lines().count(), 3);
    assert!(report.join("report.csv").is_file());
}

#[test]
fn fanin_larger_than_inputs_is_invalid_argument() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 65);
    let out = run(&["derive-mask", "--config", &cfg, "--out", p(&dir.path().join("m.mask"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("m.mask").exists());
}

#[test]
fn malformed_mask_is_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 3);
    let mask = dir.path().join("bad.mask");
    std::fs::write(&mask, "SPARSELUT-MASK v1\nlayers 1\nlayer 0 in 64 out 1 fanin 2\n5 3\n").unwrap();
    let out = run(&["retrain", "--config", &cfg, "--mask", p(&mask), "--out", p(&dir.path().join("m.json"))]);
    assert_eq!(out.status.code(), Some(3));
    let out = run(&["heatmap", "--mask", p(&mask), "--out", p(&dir.path().join("h.csv"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn missing_config_is_reported() {
    let out = run(&["derive-mask", "--config", "/nonexistent/cfg.json", "--out", "/tmp/x.mask"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}
