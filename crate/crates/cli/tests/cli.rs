//! End-to-end tests of the command-line surface: exit codes, file outputs,
//! determinism, and cross-command consistency.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bi-isca"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("binary runs")
}

fn assert_status(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_toy_config(dir: &Path) {
    std::fs::write(
        dir.join("config.json"),
        r#"{
  "seed": 5,
  "dataset": "toy.jsonl",
  "n": 6,
  "batch_size": 16,
  "model": { "d": 8, "k": 4, "dense_width": 32, "bucket_count": 64 },
  "train": { "epochs": 4, "patience": 4 }
}"#,
    )
    .unwrap();
}

fn prep_and_train(dir: &Path) {
    let out = run(
        &["prep", "--synthetic", "120", "--seed", "3", "--output", "toy.jsonl"],
        dir,
    );
    assert_status(&out, 0);
    write_toy_config(dir);
    let out = run(&["train", "--config", "config.json", "--out-dir", "run"], dir);
    assert_status(&out, 0);
}

#[test]
fn train_writes_weights_history_and_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    prep_and_train(dir.path());
    assert!(dir.path().join("run/weights.json").exists());
    assert!(dir.path().join("run/config.json").exists());
    let history = std::fs::read_to_string(dir.path().join("run/history.jsonl")).unwrap();
    assert!(history.lines().count() >= 1);
    let first: serde_json::Value = serde_json::from_str(history.lines().next().unwrap()).unwrap();
    assert_eq!(first["epoch"], 1);
    assert!(first["train_loss"].is_f64());
    assert!(first["val_metrics"]["acc"].is_f64());
}

#[test]
fn same_seed_gives_byte_identical_weights() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["prep", "--synthetic", "120", "--seed", "3", "--output", "toy.jsonl"],
        dir.path(),
    );
    assert_status(&out, 0);
    write_toy_config(dir.path());
    let out = run(&["train", "--config", "config.json", "--out-dir", "a"], dir.path());
    assert_status(&out, 0);
    let out = run(&["train", "--config", "config.json", "--out-dir", "b"], dir.path());
    assert_status(&out, 0);
    let a = std::fs::read(dir.path().join("a/weights.json")).unwrap();
    let b = std::fs::read(dir.path().join("b/weights.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn config_snapshot_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    prep_and_train(dir.path());
    // Re-train from the snapshot the first run wrote.
    let out = run(
        &["train", "--config", "run/config.json", "--out-dir", "again"],
        dir.path(),
    );
    assert_status(&out, 0);
    let a = std::fs::read(dir.path().join("run/weights.json")).unwrap();
    let b = std::fs::read(dir.path().join("again/weights.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn eval_emits_metrics_record_with_stable_schema() {
    let dir = tempfile::tempdir().unwrap();
    prep_and_train(dir.path());
    let out = run(
        &["eval", "--config", "config.json", "--weights", "run/weights.json", "--out-dir", "run"],
        dir.path(),
    );
    assert_status(&out, 0);
    let record = std::fs::read_to_string(dir.path().join("run/metrics.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&record).unwrap();
    for field in ["acc", "macro_f1", "precision", "recall", "tp", "fp", "fn", "tn"] {
        assert!(value.get(field).is_some(), "missing {field} in {record}");
    }
}

#[test]
fn export_attention_schema_and_predict_consistency() {
    let dir = tempfile::tempdir().unwrap();
    prep_and_train(dir.path());
    let comment = "honestly the plan went fine";
    let reply = "sure, great work";
    let out = run(
        &[
            "export-attention",
            "--config",
            "config.json",
            "--weights",
            "run/weights.json",
            "--comment",
            comment,
            "--reply",
            reply,
        ],
        dir.path(),
    );
    assert_status(&out, 0);
    let export: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("export is JSON");
    assert_eq!(export["schema"], "bi-isca-attention");
    assert_eq!(export["version"], 1);
    assert_eq!(export["n"], 6);

    // Four score vectors, each of length n, raw and normalized related by
    // min-max scaling.
    for map in [
        "comment_on_reply_forward",
        "comment_on_reply_backward",
        "reply_on_comment_forward",
        "reply_on_comment_backward",
    ] {
        let raw = export[map]["raw"].as_array().unwrap();
        let normalized = export[map]["normalized"].as_array().unwrap();
        assert_eq!(raw.len(), 6);
        assert_eq!(normalized.len(), 6);
        let values: Vec<f64> = raw.iter().map(|v| v.as_f64().unwrap()).collect();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (r, n) in values.iter().zip(normalized) {
            let want = if max == min { 0.0 } else { (r - min) / (max - min) };
            assert!((n.as_f64().unwrap() - want).abs() < 1e-12);
        }
    }

    // Tokens are exported pre-padding.
    assert_eq!(export["comment_tokens"].as_array().unwrap().len(), 5);

    // The exported prediction equals the predict command's output for the
    // same pair and weights.
    let out = run(
        &[
            "predict",
            "--config",
            "config.json",
            "--weights",
            "run/weights.json",
            "--comment",
            comment,
            "--reply",
            reply,
        ],
        dir.path(),
    );
    assert_status(&out, 0);
    let predicted: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(predicted["prediction"], export["prediction"]);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    // Missing dataset.
    let out = run(&["train", "--n", "6", "--d", "8", "--k", "4", "--dense-width", "32"], dir.path());
    assert_status(&out, 2);
    // Unreadable config.
    let out = run(&["train", "--config", "missing.json"], dir.path());
    assert_status(&out, 2);
    // Unknown config key.
    std::fs::write(dir.path().join("bad.json"), r#"{"learning_rate": 0.1}"#).unwrap();
    let out = run(&["train", "--config", "bad.json"], dir.path());
    assert_status(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field"));
}

#[test]
fn dimension_mismatch_exits_2_naming_both_shapes() {
    let dir = tempfile::tempdir().unwrap();
    prep_and_train(dir.path());
    let out = run(
        &[
            "eval",
            "--config",
            "config.json",
            "--weights",
            "run/weights.json",
            "--d",
            "6",
            "--out-dir",
            "run",
        ],
        dir.path(),
    );
    assert_status(&out, 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("8") && stderr.contains("6"), "{stderr}");
}

#[test]
fn empty_sentence_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    prep_and_train(dir.path());
    let out = run(
        &[
            "export-attention",
            "--config",
            "config.json",
            "--weights",
            "run/weights.json",
            "--comment",
            "",
            "--reply",
            "something",
        ],
        dir.path(),
    );
    assert_status(&out, 2);
}

#[test]
fn prep_imports_tsv_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("pairs.tsv"), "a comment\ta reply\nmore text\tmore reply\n")
        .unwrap();
    let out = run(
        &[
            "prep", "--input", "pairs.tsv", "--format", "tsv", "--label", "1", "--output",
            "out.jsonl",
        ],
        dir.path(),
    );
    assert_status(&out, 0);
    let text = std::fs::read_to_string(dir.path().join("out.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.contains("\"label\":1"));

    // TSV without --label is a usage error.
    let out = run(
        &["prep", "--input", "pairs.tsv", "--format", "tsv", "--output", "x.jsonl"],
        dir.path(),
    );
    assert_status(&out, 2);

    std::fs::write(
        dir.path().join("task.csv"),
        "context,response,label\n\"[\"\"one\"\", \"\"two\"\"]\",reply text,SARCASM\n",
    )
    .unwrap();
    let out = run(
        &[
            "prep", "--input", "task.csv", "--format", "csv", "--source", "twitter", "--output",
            "c.jsonl",
        ],
        dir.path(),
    );
    assert_status(&out, 0);
    let text = std::fs::read_to_string(dir.path().join("c.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 2, "one pair per context utterance");
}

#[test]
fn pair_file_input_works() {
    let dir = tempfile::tempdir().unwrap();
    prep_and_train(dir.path());
    std::fs::write(
        dir.path().join("pair.json"),
        r#"{"comment": "honestly nice", "reply": "sure thing"}"#,
    )
    .unwrap();
    let out = run(
        &[
            "export-attention",
            "--config",
            "config.json",
            "--weights",
            "run/weights.json",
            "--pair-file",
            "pair.json",
            "--output",
            "att.json",
        ],
        dir.path(),
    );
    assert_status(&out, 0);
    let export: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("att.json")).unwrap())
            .unwrap();
    assert_eq!(export["reply_tokens"].as_array().unwrap().len(), 2);
}
