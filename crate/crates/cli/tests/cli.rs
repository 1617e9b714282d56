use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use avmc_core::data::load_feature_archive;
use serde_json::Value;

fn avmc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avmc"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn synth(dir: &Path, name: &str, labeled: &str, unlabeled: &str, seed: &str) -> PathBuf {
    let out = avmc(dir, &["synth", "--out", name, "--n-labeled", labeled, "--n-unlabeled", unlabeled, "--seed", seed]);
    assert!(out.status.success(), "{}", stderr(&out));
    dir.join(name)
}

const RUN: &str = r#"{
    "data": "toy.zip",
    "model": {"hidden_dims": {"text": 8, "acoustic": 8, "visual": 8}},
    "train": {"batch_size": 8, "max_epochs": 2}
}"#;

/// A trained checkpoint on a small synthetic archive.
fn trained(dir: &Path) -> PathBuf {
    synth(dir, "toy.zip", "40", "20", "3");
    std::fs::write(dir.join("run.json"), RUN).unwrap();
    let out = avmc(dir, &["train", "--config", "run.json", "--semi", "--seed", "42", "--out", "out"]);
    assert!(out.status.success(), "{}", stderr(&out));
    dir.join("out")
}

#[test]
fn synth_counts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "a.zip", "300", "600", "1");
    let b = synth(dir.path(), "b.zip", "300", "600", "1");
    let data = load_feature_archive(&a).unwrap();
    assert_eq!(data.len(), 900);
    assert_eq!(data.stats().n_unsupervised, 600);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn synth_to_unwritable_path_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = avmc(dir.path(), &["synth", "--out", "missing/dir/toy.zip", "--n-labeled", "4"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn aggregate_rows() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("scores.csv"),
        "id,s1,s2,s3,s4,s5,s6,s7\nx,0,0,0,0,0,0,0\ny,3,3,3,3,3,3,3\nz,2,2,2,2,2,1,3\n",
    )
    .unwrap();
    let out = avmc(dir.path(), &["aggregate", "scores.csv", "labels.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let labels = std::fs::read_to_string(dir.path().join("labels.csv")).unwrap();
    let rows: Vec<&str> = labels.lines().collect();
    assert!(rows.contains(&"x,0.0") && rows.contains(&"y,1.0") && rows.contains(&"z,0.6"), "{labels}");
}

#[test]
fn aggregate_reports_the_bad_row() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("scores.csv"), "x,0,0,0,0,0,0,0\ny,1,2,3\n").unwrap();
    let out = avmc(dir.path(), &["aggregate", "scores.csv", "labels.csv"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("row 2"), "{}", stderr(&out));
    assert!(!dir.path().join("labels.csv").exists());
}

#[test]
fn train_writes_outputs_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let out = trained(dir.path());
    for name in ["checkpoint.zip", "history.jsonl", "report.json", "config.json"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let history = std::fs::read_to_string(out.join("history.jsonl")).unwrap();
    let epochs: Vec<Value> = history.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(epochs.len(), 2);
    assert!(epochs[0]["phase2"]["regression"]["m"].is_number());
    assert!(epochs[1]["validation"]["mae"].is_number());

    let first: Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    let again = avmc(dir.path(), &["train", "--config", "run.json", "--semi", "--seed", "42", "--out", "again"]);
    assert!(again.status.success());
    let second: Value = serde_json::from_slice(&std::fs::read(dir.path().join("again/report.json")).unwrap()).unwrap();
    let (a, b) = (first["mae"].as_f64().unwrap(), second["mae"].as_f64().unwrap());
    assert!((a - b).abs() <= 1e-6);
}

#[test]
fn ablation_flag_sets_weights() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "toy.zip", "30", "0", "4");
    std::fs::write(dir.path().join("run.json"), RUN).unwrap();
    let out = avmc(dir.path(), &["train", "--config", "run.json", "--ablate", "mixup-a", "--set", "train.max_epochs=1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let config: Value = serde_json::from_slice(&std::fs::read(dir.path().join("run/config.json")).unwrap()).unwrap();
    assert_eq!(config["train"]["ablation"]["disable_mixup_a"], Value::Bool(true));
    assert_eq!(config["train"]["ablation"]["disable_mixup_v"], Value::Bool(false));
    assert_eq!(config["train"]["max_epochs"], 1);
}

#[test]
fn bad_config_and_missing_archive() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.json"), RUN).unwrap();
    let out = avmc(dir.path(), &["train", "--config", "run.json", "--set", "train.learning_rate=0.1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("train.learning_rate"), "{}", stderr(&out));

    let out = avmc(dir.path(), &["train", "--config", "run.json", "--set", "model.dropout=1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("model.dropout"), "{}", stderr(&out));

    let out = avmc(dir.path(), &["train", "--config", "run.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("toy.zip"), "{}", stderr(&out));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn eval_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = trained(dir.path());
    let ckpt = out.join("checkpoint.zip");
    let ckpt = ckpt.to_str().unwrap();

    let res = avmc(dir.path(), &["eval", "--checkpoint", ckpt, "--archive", "toy.zip", "--split", "test", "--out", "m.json"]);
    assert!(res.status.success(), "{}", stderr(&res));
    let reports: Value = serde_json::from_slice(&std::fs::read(dir.path().join("m.json")).unwrap()).unwrap();
    let report = &reports[0];
    for key in ["acc2", "f1", "acc2_weak", "mae", "corr", "r_square"] {
        assert!(report.get(key).is_some(), "{key}");
    }
    assert_eq!(String::from_utf8_lossy(&res.stdout).lines().count(), 1);

    let res = avmc(
        dir.path(),
        &["eval", "--checkpoint", ckpt, "--archive", "toy.zip", "--tasks", "t,a,v", "--label-source", "unimodal", "--out", "tav.json"],
    );
    assert!(res.status.success(), "{}", stderr(&res));
    let reports: Value = serde_json::from_slice(&std::fs::read(dir.path().join("tav.json")).unwrap()).unwrap();
    let tasks: Vec<&str> = reports.as_array().unwrap().iter().map(|r| r["task"].as_str().unwrap()).collect();
    assert_eq!(tasks, ["text", "acoustic", "visual"]);

    let res = avmc(dir.path(), &["eval", "--checkpoint", ckpt, "--archive", "toy.zip", "--split", "dev", "--out", "bad.json"]);
    assert!(!res.status.success());
    assert!(!dir.path().join("bad.json").exists());

    let res = avmc(dir.path(), &["synth", "--out", "big.zip", "--n-labeled", "2", "--preset", "canonical"]);
    assert!(res.status.success());
    let res = avmc(dir.path(), &["eval", "--checkpoint", ckpt, "--archive", "big.zip", "--out", "mismatch.json"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(stderr(&res).contains("text"), "{}", stderr(&res));
    assert!(!dir.path().join("mismatch.json").exists());
}

#[test]
fn predict_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = trained(dir.path());
    let ckpt = out.join("checkpoint.zip");
    let res = avmc(
        dir.path(),
        &["predict", "--checkpoint", ckpt.to_str().unwrap(), "--archive", "toy.zip", "--split", "valid", "--out", "p.csv"],
    );
    assert!(res.status.success(), "{}", stderr(&res));
    let csv = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("id,prediction,label"));
    let n_valid = load_feature_archive(dir.path().join("toy.zip")).unwrap().stats().valid;
    assert_eq!(lines.count(), n_valid);
}
