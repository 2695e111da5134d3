use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn telemb(work: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_telemb"))
        .args(args)
        .arg("--work-dir")
        .arg(work)
        .output()
        .expect("binary runs")
}

fn ok(work: &Path, args: &[&str]) -> String {
    let out = telemb(work, args);
    assert!(
        out.status.success(),
        "telemb {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = telemb(dir.path(), &["ingest", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_set_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = telemb(dir.path(), &["repro", "--set", "epochs"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_corpus_reports_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent");
    let out = telemb(dir.path(), &["ingest", "--corpus", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("IoError"), "{}", stderr(&out));
}

#[test]
fn unknown_config_key_reports_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = telemb(dir.path(), &["repro", "--set", "nonsense=1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("ConfigError"));
}

#[test]
fn version_lists_format_versions() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(dir.path(), &["--version"]);
    for name in ["checkpoint", "dense_index", "sparse_index", "tokenizer"] {
        assert!(text.contains(&format!("{name} format v")), "{text}");
    }
}

#[test]
fn corrupt_checkpoint_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    ok(w, &["dataset", "synth", "--n-train", "20", "--n-test", "10"]);
    ok(w, &["ingest", "--corpus", w.join("corpus").to_str().unwrap(), "--set", "min_chars=80"]);
    ok(w, &["tok", "train", "--vocab-size", "300"]);
    fs::write(w.join("fine.ckpt"), b"not a checkpoint").unwrap();
    let out = telemb(w, &["eval", "triplets"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("FormatError"), "{}", stderr(&out));
}

#[test]
fn staged_pipeline_writes_artifacts_and_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    let corpus = w.join("corpus");
    ok(w, &["dataset", "synth", "--n-train", "200", "--n-test", "40"]);
    let ingest = ok(w, &["ingest", "--corpus", corpus.to_str().unwrap(), "--set", "min_chars=80", "--set", "max_chars=600"]);
    assert!(ingest.contains("40 chunks"), "{ingest}");
    ok(w, &["tok", "train", "--vocab-size", "400"]);
    ok(w, &["tok", "extend", "--terms-file", w.join("domain_terms.txt").to_str().unwrap()]);
    ok(w, &["dataset", "benchmark", "--negatives-per-query", "3"]);
    ok(w, &["train", "--set", "lr=0.01", "--set", "epochs=3"]);

    let base = w.join("base.ckpt");
    let acc = |text: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with("Triplet Accuracy,")).unwrap();
        line.split(',').nth(1).unwrap().parse().unwrap()
    };
    let fine_acc = acc(&ok(w, &["eval", "triplets"]));
    let base_acc = acc(&ok(w, &["eval", "triplets", "--checkpoint", base.to_str().unwrap()]));
    assert!(fine_acc > base_acc, "fine {fine_acc} vs base {base_acc}");

    ok(w, &["eval", "retrieval", "--k", "3"]);
    ok(w, &["analyze", "dist"]);
    ok(w, &["analyze", "project", "--method", "pca"]);
    ok(w, &["index", "build"]);
    let hits = ok(w, &["index", "query", "carrier frequency", "--mode", "hybrid", "--k", "3", "--lambda", "0.5"]);
    assert_eq!(hits.lines().count(), 3, "{hits}");

    // Querying the dense index with a different encoder is refused.
    let out = telemb(w, &["index", "query", "carrier", "--mode", "dense", "--checkpoint", base.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("CheckpointMismatch"), "{}", stderr(&out));

    for f in [
        "chunks.jsonl",
        "tokenizer.json",
        "pairs.jsonl",
        "base.ckpt",
        "fine.ckpt",
        "train_history.csv",
        "metrics_triplets_fine.json",
        "metrics_retrieval_fine.json",
        "similarity_fine.csv",
        "projection_pca.csv",
        "index/dense.didx",
        "index/sparse.json",
        "manifests/train.json",
        "manifests/index-build.json",
    ] {
        assert!(w.join(f).is_file(), "missing {f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(w.join("manifests/train.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["config"]["learning_rate"], "0.01");
    assert!(manifest["outputs"]["fine.ckpt"].as_str().unwrap().len() == 64);
}

#[test]
fn repro_is_byte_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let table = ok(a.path(), &["repro", "--seed", "7"]);
    ok(b.path(), &["repro", "--seed", "7"]);
    assert!(table.contains("Triplet Accuracy"), "{table}");
    for f in ["manifest.json", "metrics_base.json", "metrics_fine.json", "fine.ckpt", "index/dense.didx"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs between runs"
        );
    }
}
