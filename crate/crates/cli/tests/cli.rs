use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn icd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_icd-coder"))
        .current_dir(dir)
        .env_remove("ICD_CODER_SEED")
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Synthetic corpus in `dir/data` whose config trains a small forest.
fn corpus(dir: &Path, docs: &str) {
    ok(icd(dir, &["synth", "--docs", docs, "--out", "data"]));
    let path = dir.join("data/config.json");
    let mut c = json(&path);
    c["classifier"] = serde_json::json!({"kind": "random_forest", "n_estimators": 8});
    std::fs::write(&path, c.to_string()).unwrap();
}

#[test]
fn train_report_and_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    corpus(d, "500");
    for f in ["dataset.jsonl", "vocabulary.csv", "oracle.emb", "oracle.ids", "config.json"] {
        assert!(d.join("data").join(f).is_file(), "{f}");
    }
    let printed: Value = serde_json::from_str(&ok(icd(d, &["train", "--config", "data/config.json", "--out", "run"]))).unwrap();
    let report = json(&d.join("run/run_report.json"));
    assert_eq!(printed["test"]["f1_micro"], report["test"]["f1_micro"]);

    let table = ok(icd(d, &["report", "--run", "run"]));
    assert!(table.starts_with("Text Representation"), "{table}");
    let summary = json(&d.join("run/summary.json"));
    for part in ["validation", "test"] {
        let mut keys: Vec<&String> = summary[part].as_object().unwrap().keys().collect();
        keys.sort();
        assert_eq!(keys, ["f1_macro", "f1_micro", "precision_micro", "recall_micro"]);
    }
    let classes = std::fs::read_to_string(d.join("run/class_metrics.csv")).unwrap();
    let vocab = std::fs::read_to_string(d.join("data/vocabulary.csv")).unwrap();
    assert_eq!(classes.lines().count(), vocab.lines().count());
    assert!(classes.lines().next().unwrap().ends_with(",zero_division"));

    let eval: Value = serde_json::from_str(&ok(icd(
        d,
        &["evaluate", "--config", "data/config.json", "--out", "eval", "--predictions", "run/predictions_test.csv"],
    )))
    .unwrap();
    for key in ["f1_micro", "f1_macro", "precision_micro", "recall_micro", "precision_macro", "recall_macro"] {
        let a = eval[key].as_f64().unwrap();
        let b = report["test"][key].as_f64().unwrap();
        assert!((a - b).abs() <= 1e-12, "{key}: {a} vs {b}");
    }
    assert!(d.join("eval/evaluation.json").is_file());
    assert!(d.join("eval/evaluation_classes.csv").is_file());
}

#[test]
fn stage_commands_write_their_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    corpus(d, "200");
    let pre: Value = serde_json::from_str(&ok(icd(d, &["preprocess", "--config", "data/config.json", "--out", "s"]))).unwrap();
    assert_eq!(pre["documents"], 200);
    assert!(d.join("s/preprocessed.jsonl").is_file());
    let split: Value = serde_json::from_str(&ok(icd(d, &["split", "--config", "data/config.json", "--out", "s"]))).unwrap();
    let sizes: u64 = split["sizes"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(sizes, 200);
    assert_eq!(std::fs::read_to_string(d.join("s/split.csv")).unwrap().lines().count(), 201);
    ok(icd(d, &["vectorize", "--config", "data/config.json", "--out", "s"]));
    assert!(d.join("s/representation.json").is_file());
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(icd(d, &["train", "--config", "missing.json"]).status.code(), Some(2));
    assert_eq!(icd(d, &["train"]).status.code(), Some(2));

    corpus(d, "100");
    let mut c = json(&d.join("data/config.json"));
    c["representation"] = serde_json::json!({"kind": "elmo"});
    std::fs::write(d.join("bad.json"), c.to_string()).unwrap();
    let out = icd(d, &["train", "--config", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    assert_eq!(icd(d, &["report", "--run", "nowhere"]).status.code(), Some(3));
    let out = icd(d, &["evaluate", "--config", "data/config.json", "--predictions", "none.csv"]);
    assert_eq!(out.status.code(), Some(3));

    std::fs::write(d.join("bad.csv"), "id,code,score\ndoc000000,S01,1.5\n").unwrap();
    let out = icd(d, &["evaluate", "--config", "data/config.json", "--predictions", "bad.csv"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn seed_comes_from_flag_then_env_then_config() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    corpus(d, "300");
    ok(icd(d, &["split", "--config", "data/config.json", "--out", "flag", "--seed", "5"]));
    let env = Command::new(env!("CARGO_BIN_EXE_icd-coder"))
        .current_dir(d)
        .env("ICD_CODER_SEED", "5")
        .args(["split", "--config", "data/config.json", "--out", "env"])
        .output()
        .unwrap();
    ok(env);
    let both = Command::new(env!("CARGO_BIN_EXE_icd-coder"))
        .current_dir(d)
        .env("ICD_CODER_SEED", "5")
        .args(["split", "--config", "data/config.json", "--out", "both", "--seed", "6"])
        .output()
        .unwrap();
    ok(both);
    ok(icd(d, &["split", "--config", "data/config.json", "--out", "six", "--seed", "6"]));
    let read = |p: &str| std::fs::read_to_string(d.join(p).join("split.csv")).unwrap();
    assert_eq!(read("flag"), read("env"));
    assert_eq!(read("both"), read("six"));
    assert_ne!(read("flag"), read("six"));

    let bad = Command::new(env!("CARGO_BIN_EXE_icd-coder"))
        .current_dir(d)
        .env("ICD_CODER_SEED", "not-a-number")
        .args(["split", "--config", "data/config.json"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn tune_writes_a_leaderboard_led_by_the_best_trial() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    corpus(d, "300");
    let printed: Value = serde_json::from_str(&ok(icd(
        d,
        &["tune", "--config", "data/config.json", "--out", "t", "--classifier", "random_forest", "--budget", "4"],
    )))
    .unwrap();
    assert_eq!(printed["trials"], 4);
    let best = printed["best_trial"].as_u64().unwrap();
    let board = std::fs::read_to_string(d.join("t/leaderboard.csv")).unwrap();
    let mut lines = board.lines();
    assert_eq!(lines.next().unwrap(), "configuration,parameter,value");
    assert!(lines.next().unwrap().starts_with(&format!("random_forest_trial_{best},")));
    assert_eq!(std::fs::read_to_string(d.join("t/journal.jsonl")).unwrap().lines().count(), 4);
    let report = json(&d.join("t/run_report.json"));
    assert_eq!(report["tuning"]["best_trial"].as_u64(), Some(best));
}
