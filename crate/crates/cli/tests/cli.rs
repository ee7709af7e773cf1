use std::path::Path;
use std::process::{Command, Output};

fn newsgraph(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_newsgraph"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = newsgraph(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn graphs(dir: &Path) {
    ok(dir, &["gen-synth", "--out", "corpus", "--articles", "24", "--seed", "1", "--dtext", "16"]);
    ok(
        dir,
        &[
            "build-graphs", "--corpus", "corpus", "--out", "g", "--setup", "4", "--features", "text+social", "--dtext",
            "16", "--folds", "3",
        ],
    );
}

#[test]
fn pipeline_train_then_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    graphs(dir);
    assert!(dir.join("g/manifest.json").exists());
    assert!(dir.join("g/folds.json").exists());
    assert_eq!(std::fs::read_dir(dir.join("g/graphs")).unwrap().count(), 24);

    ok(
        dir,
        &[
            "train", "--graphs", "g", "--conv", "gat", "--mode", "homo-truncate", "--epochs", "2", "--hidden", "8",
            "--heads", "2", "--holdout", "0", "--out", "ck.json",
        ],
    );
    let report: serde_json::Value =
        serde_json::from_str(&ok(dir, &["evaluate", "--graphs", "g", "--ckpt", "ck.json", "--folds", "g/folds.json"]))
            .unwrap();
    assert_eq!(report["graph_mode"], "homo_truncate");
    let folds = report["folds"].as_array().unwrap();
    assert_eq!(folds.len(), 1);
    assert_eq!(folds[0]["fold"], 0);
    let f1 = report["overall"]["macro_f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f1));
}

#[test]
fn evaluate_every_fold_without_holdout() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    graphs(dir);
    ok(dir, &["train", "--graphs", "g", "--conv", "sage", "--epochs", "1", "--hidden", "4", "--out", "ck.json"]);
    let report: serde_json::Value =
        serde_json::from_str(&ok(dir, &["evaluate", "--graphs", "g", "--ckpt", "ck.json", "--folds", "g/folds.json"]))
            .unwrap();
    assert_eq!(report["folds"].as_array().unwrap().len(), 3);
    let total: u64 = report["overall"]["confusion"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|r| r.as_array().unwrap().iter().map(|v| v.as_u64().unwrap()))
        .sum();
    assert_eq!(total, 24);
}

#[test]
fn run_matrix_writes_report_and_table() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["gen-synth", "--out", "corpus", "--articles", "20", "--seed", "2", "--dtext", "8"]);
    std::fs::write(
        dir.join("matrix.yaml"),
        "setups: [1]\nconvs: [sage]\ngraph_modes: [hetero, homo_pad]\nfolds: 2\nembedder: {kind: hashing, dim: 8, seed: 0}\n\
         train: {epochs: 1, batch_size: 8}\nmodel: {hidden_dim: 4}\n",
    )
    .unwrap();
    let table = ok(dir, &["run-matrix", "--corpus", "corpus", "--config", "matrix.yaml", "--out", "report.json"]);
    assert!(table.lines().any(|l| l.starts_with("S1") && l.contains("hetero")), "{table}");
    assert!(table.lines().any(|l| l.contains("homo_pad")), "{table}");
    let on_disk = std::fs::read_to_string(dir.join("report.txt")).unwrap();
    assert_eq!(on_disk, table);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["reports"].as_array().unwrap().len(), 2);
}

#[test]
fn input_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = newsgraph(dir, &["build-graphs", "--corpus", "missing", "--out", "g", "--setup", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let out = newsgraph(dir, &["build-graphs", "--corpus", "missing", "--out", "g", "--setup", "9"]);
    assert_eq!(out.status.code(), Some(1));
    let out = newsgraph(dir, &["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    graphs(dir);
    let out = newsgraph(dir, &["train", "--graphs", "g", "--conv", "transformer", "--out", "ck.json"]);
    assert_eq!(out.status.code(), Some(1));
    let out = newsgraph(dir, &["train", "--graphs", "g", "--conv", "sage", "--holdout", "7", "--out", "ck.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn mismatched_fold_file_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    graphs(dir);
    ok(dir, &["gen-synth", "--out", "other", "--articles", "10", "--seed", "9", "--dtext", "16"]);
    ok(dir, &["build-graphs", "--corpus", "other", "--out", "h", "--setup", "1", "--dtext", "16", "--folds", "2"]);
    ok(dir, &["train", "--graphs", "g", "--conv", "sage", "--epochs", "1", "--hidden", "4", "--out", "ck.json"]);
    let out = newsgraph(dir, &["evaluate", "--graphs", "g", "--ckpt", "ck.json", "--folds", "h/folds.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("different graph set"));
}

#[test]
fn divergent_training_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    graphs(dir);
    let out = newsgraph(
        dir,
        &["train", "--graphs", "g", "--conv", "hgt", "--epochs", "3", "--lr", "1e300", "--hidden", "4", "--out", "ck.json"],
    );
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.join("ck.json").exists());
}
