use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn nbrpred(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nbrpred"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok_json(args: &[&str]) -> Value {
    let out = nbrpred(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("report is JSON")
}

fn error_json(args: &[&str]) -> (i32, Value) {
    let out = nbrpred(args);
    assert!(!out.status.success());
    let line = String::from_utf8_lossy(&out.stderr)
        .lines()
        .last()
        .unwrap_or_default()
        .to_owned();
    (
        out.status.code().unwrap(),
        serde_json::from_str(&line).expect("error is JSON"),
    )
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn validate_theory_reports_effect_sizes_and_hamming() {
    let r = ok_json(&[
        "validate-theory",
        "--n",
        "400,800",
        "--p",
        "0.1",
        "--q",
        "0.02",
        "--seeds",
        "2",
    ]);
    assert_eq!(r["config"]["seeds"], serde_json::json!([0, 1]));
    let summary = r["result"]["summary"].as_array().unwrap();
    assert_eq!(summary.len(), 2);
    for s in summary {
        assert!(s["mean_raw_effect_size"].as_f64().unwrap() > 0.0);
        assert!(
            s["mean_pifa_effect_size"].as_f64().unwrap()
                > s["mean_raw_effect_size"].as_f64().unwrap()
        );
        assert!(s["mean_hamming"].as_f64().is_some());
    }
    assert_eq!(r["result"]["runs"].as_array().unwrap().len(), 4);
}

#[test]
fn random_tree_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let (ra, rb) = (dir.path().join("ra.json"), dir.path().join("rb.json"));
    for (t, r) in [(&a, &ra), (&b, &rb)] {
        let out = nbrpred(&[
            "tree",
            "--mode",
            "random",
            "--n",
            "300",
            "--seed",
            "7",
            "--tree-out",
            p(t),
            "--out",
            p(r),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read(&ra).unwrap(), fs::read(&rb).unwrap());
    let other = dir.path().join("c.json");
    nbrpred(&[
        "tree",
        "--mode",
        "random",
        "--n",
        "300",
        "--seed",
        "8",
        "--tree-out",
        p(&other),
    ]);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&other).unwrap());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"n": 100, "p": 0.2, "q": 0.05, "seed": 4}"#).unwrap();
    let r = ok_json(&["csbm-gen", "--config", p(&cfg), "--n", "60"]);
    assert_eq!(r["config"]["n"], 60);
    assert_eq!(r["config"]["p"], 0.2);
    assert_eq!(r["config"]["seed"], 4);
    assert_eq!(r["result"]["n_nodes"], 60);
}

#[test]
fn pipeline_chains_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let f = |name: &str| dir.path().join(name);
    ok_json(&[
        "csbm-gen",
        "--n",
        "200",
        "--seed",
        "1",
        "--graph-out",
        p(&f("g.tsv")),
        "--features-out",
        p(&f("x.bin")),
        "--labels-out",
        p(&f("y.txt")),
    ]);
    let z = ok_json(&[
        "pifa",
        "--graph",
        p(&f("g.tsv")),
        "--features",
        p(&f("x.bin")),
        "--features-out",
        p(&f("z.bin")),
    ]);
    assert_eq!(z["result"]["rows"], 200);
    let t = ok_json(&[
        "tree",
        "--graph",
        p(&f("g.tsv")),
        "--features",
        p(&f("x.bin")),
        "--schedule",
        "4,32,200",
        "--tree-out",
        p(&f("tree.json")),
    ]);
    assert_eq!(t["result"]["schedule"], serde_json::json!([4, 32, 200]));
    let tr = ok_json(&[
        "train",
        "--graph",
        p(&f("g.tsv")),
        "--features",
        p(&f("x.bin")),
        "--tree",
        p(&f("tree.json")),
        "--labels",
        p(&f("y.txt")),
        "--steps-per-level",
        "30",
        "--d-emb",
        "16",
        "--model-out",
        p(&f("model")),
    ]);
    assert_eq!(tr["result"]["levels"].as_array().unwrap().len(), 3);
    assert!(tr["result"]["downstream"]["test_accuracy"]
        .as_f64()
        .is_some());
    assert!(f("model").join("metadata.json").exists());
    let e = ok_json(&[
        "embed",
        "--model",
        p(&f("model")),
        "--features",
        p(&f("x.bin")),
        "--embeddings-out",
        p(&f("e.bin")),
    ]);
    assert_eq!(e["result"]["cols"], 16);
    let pr = ok_json(&[
        "predict",
        "--model",
        p(&f("model")),
        "--features",
        p(&f("x.bin")),
        "--graph",
        p(&f("g.tsv")),
        "--top-k",
        "5",
        "--rows",
        "0,3",
    ]);
    let preds = pr["result"]["predictions"].as_array().unwrap();
    assert_eq!(preds.len(), 2);
    assert_eq!(preds[1]["row"], 3);
    assert_eq!(preds[0]["clusters"].as_array().unwrap().len(), 5);
    assert!(pr["result"]["precision_at_k"].as_f64().is_some());
    let ev = ok_json(&[
        "eval-downstream",
        "--features",
        p(&f("e.bin")),
        "--labels",
        p(&f("y.txt")),
        "--classifier",
        "logreg",
        "--epochs",
        "20",
    ]);
    assert_eq!(ev["result"]["kind"], "logreg");
}

#[test]
fn vectorize_writes_sparse_features() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.txt");
    fs::write(&corpus, "the cat sat\nthe dog ran far\n\nthe cat ran\n").unwrap();
    let x = dir.path().join("x.bin");
    let r = ok_json(&[
        "vectorize",
        "--corpus",
        p(&corpus),
        "--max-char-trigrams",
        "0",
        "--features-out",
        p(&x),
    ]);
    assert_eq!(r["result"]["documents"], 4);
    assert_eq!(r["result"]["empty_rows"], 1);
    assert_eq!(r["result"]["family_sizes"]["char_trigram"], 0);
    assert_eq!(&fs::read(&x).unwrap()[..8], b"GIANTSPR");
}

#[test]
fn four_cycle_link_prediction_fails() {
    let r = ok_json(&[
        "linkpred-baseline",
        "--four-cycle",
        "--d-emb",
        "8",
        "--seed",
        "3",
    ]);
    assert!(r["result"]["auc"].as_f64().unwrap() <= 0.55);
}

#[test]
fn ablation_reports_all_four_arms() {
    let r = ok_json(&[
        "ablation",
        "--n",
        "400",
        "--seeds",
        "1",
        "--steps-per-level",
        "50",
        "--schedule",
        "4,16,64",
    ]);
    let modes: Vec<&str> = r["result"]["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|row| row["mode"].as_str().unwrap())
        .collect();
    assert_eq!(
        modes,
        ["tfidf_pifa", "identity_pifa", "tfidf_only", "random"]
    );
}

#[test]
fn failures_are_machine_readable() {
    let (code, e) = error_json(&["pifa", "--graph", "/nonexistent/graph.tsv"]);
    assert_eq!(code, 1);
    assert_eq!(e["error"]["kind"], "io");

    let (code, e) = error_json(&["tree", "--no-such-flag"]);
    assert_eq!(code, 2);
    assert_eq!(e["error"]["kind"], "usage");

    let (_, e) = error_json(&["train"]);
    assert_eq!(e["error"]["kind"], "usage");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tsv");
    fs::write(&bad, "0\t1\n1\tx\n").unwrap();
    let (code, e) = error_json(&["pifa", "--graph", p(&bad)]);
    assert_eq!(code, 1);
    assert_eq!(e["error"]["kind"], "parse");
    assert!(e["error"]["message"].as_str().unwrap().contains("line 2"));

    let (_, e) = error_json(&["csbm-gen", "--n", "7"]);
    assert_eq!(e["error"]["kind"], "invalid_input");
}
