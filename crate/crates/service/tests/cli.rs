use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const QUICK: [&str; 6] = ["--mining-rounds", "1", "--seeds-per-image", "4", "--top-k", "8"];

fn shelfscan(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shelfscan"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = shelfscan(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn unknown_command_prints_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = shelfscan(dir.path(), &["frobnicate"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage"), "{err}");
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "top_k = \"lots\"\n").unwrap();
    let out = shelfscan(dir.path(), &["--config", "bad.toml", "query-word", "x"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("top_k"));

    let out = Command::new(env!("CARGO_BIN_EXE_shelfscan"))
        .current_dir(dir.path())
        .env("SHELF_RBF_WIDTH", "wide")
        .args(["query-word", "x"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("rbf_width"));
}

#[test]
fn pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["--seed", "3", "synth", "--out", "data", "--classes", "3", "--per-class", "6", "--shelves", "9"]);
    assert!(dir.join("data/manifest.csv").exists());

    let mut train = vec!["train"];
    train.extend(QUICK);
    ok(dir, &train);
    let artifacts = dir.join("artifacts");
    assert!(artifacts.join("bank.bin").exists());
    assert!(artifacts.join("FULL/model.bin").exists());
    let record = read_json(&artifacts.join("reports/run-train.json"));
    let version = record["summary"]["model_version"].as_str().unwrap().to_string();
    assert_eq!(record["outputs"].as_array().unwrap().len(), 3);

    let eval = ok(dir, &["evaluate", "--variant", "FULL"]);
    assert!(eval.contains("accuracy"), "{eval}");
    let report = read_json(&artifacts.join("reports/evaluate-FULL.json"));
    let accuracy = report["eval"]["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&accuracy));
    let confusion = std::fs::read_to_string(artifacts.join("reports/confusion-FULL.csv")).unwrap();
    assert_eq!(confusion.lines().count(), 4);

    ok(dir, &["pr-curve"]);
    let mut reader = csv::Reader::from_path(artifacts.join("reports/pr-FULL.csv")).unwrap();
    let headers = reader.headers().unwrap().clone();
    let recall_col = headers.iter().position(|h| h == "recall").unwrap();
    let recall: Vec<f64> = reader
        .records()
        .map(|r| r.unwrap()[recall_col].parse().unwrap())
        .collect();
    assert!(recall.len() > 1);
    assert!(recall.windows(2).all(|w| w[1] <= w[0]), "{recall:?}");

    // A sub-threshold score is a normal outcome, not an error.
    let manifest = std::fs::read_to_string(dir.join("data/manifest.csv")).unwrap();
    let rel = manifest.lines().nth(1).unwrap().split(',').next().unwrap().to_string();
    let shelf = dir.join("data").join(rel);
    let shelf = shelf.to_str().unwrap();
    let out = ok(dir, &["classify", shelf, "--tau", "1e9"]);
    assert_eq!(out.trim(), "no confident product");
    let low = ok(dir, &["classify", shelf, "--tau", "-1e9"]);
    let record = read_json(&artifacts.join("reports/run-classify.json"));
    assert_eq!(record["summary"]["model_version"].as_str().unwrap(), version);
    let score = record["summary"]["score"].as_f64().unwrap();
    assert!(low.trim().ends_with(&score.to_string()), "{low}");

    ok(dir, &["active-learn", "--learning", "4", "--testing", "4", "--step", "2", "--runs", "2", "--compare"]);
    for mode in ["uncertainty", "random"] {
        let curve = std::fs::read_to_string(artifacts.join(format!("reports/active-{mode}.csv"))).unwrap();
        assert_eq!(curve.lines().next().unwrap(), "count,mean,std");
        assert_eq!(curve.lines().count(), 4);
    }

    ok(dir, &["build-index"]);
    assert!(artifacts.join("index.json").exists());
    let answer: Value = serde_json::from_str(&ok(dir, &["query-word", "zzzz"])).unwrap();
    assert_eq!(answer["unknown"], "zzzz");
}
