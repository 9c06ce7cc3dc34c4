use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_layoutgraph"))
        .args(args)
        .env_remove("LAYOUTGRAPH_CONFIG")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A dataset GUI with its last element turned back into an unplaced one.
fn query_gui(data: &Path, out: &Path) {
    let mut first = std::fs::read_dir(data).unwrap().map(|e| e.unwrap().path()).collect::<Vec<_>>();
    first.sort();
    let mut g: Value = serde_json::from_slice(&std::fs::read(&first[0]).unwrap()).unwrap();
    let last = g["elements"].as_array_mut().unwrap().last_mut().unwrap();
    let b = last["bbox"].clone();
    last.as_object_mut().unwrap().remove("bbox");
    last["aspect_ratio"] = (b["w"].as_f64().unwrap() / b["h"].as_f64().unwrap()).into();
    std::fs::write(out, g.to_string()).unwrap();
}

#[test]
fn end_to_end_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data");
    ok(&["gen-synthetic", "--seed", "3", "--count", "16", "--out", p(&data)]);
    assert_eq!(std::fs::read_dir(&data).unwrap().count(), 16);

    let pairs = d.join("pairs.json");
    ok(&["pairs", "--data", p(&data), "--seed", "1", "--chunks", "2", "--out", p(&pairs)]);

    let model = d.join("model.ck");
    ok(&["train", "--data", p(&data), "--epochs", "1", "--node-dim", "8", "--chunks", "1", "--out", p(&model)]);
    let log = std::fs::read_to_string(d.join("model.csv")).unwrap();
    assert!(log.starts_with("step,total,mse,boundary,bce"));

    let report = d.join("report.json");
    ok(&["eval", "--model", p(&model), "--pairs", p(&pairs), "--report", p(&report), "--placers", "model,center,oracle"]);
    let r: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(r["reports"].as_array().unwrap().len(), 3);
    assert_eq!(r["reports"][2]["overall"]["pos_error"], 0.0);

    let q = d.join("query.json");
    query_gui(&data, &q);
    let s: Value = serde_json::from_str(&ok(&["suggest", "--model", p(&model), "--gui", p(&q), "--mode", "all"])).unwrap();
    assert_eq!(s.as_array().unwrap().len(), 1);
    assert!(s[0]["bbox"]["w"].as_i64().unwrap() >= 1);

    let cs: Value = serde_json::from_str(&ok(&["extract-constraints", "--in", p(&std::fs::read_dir(&data).unwrap().next().unwrap().unwrap().path())])).unwrap();
    assert!(cs.is_array());

    let cls = d.join("cls.ck");
    ok(&["train", "--data", p(&data), "--task", "classify", "--epochs", "1", "--node-dim", "8", "--out", p(&cls)]);
    let c: Value = serde_json::from_str(&ok(&["classify", "--model", p(&cls), "--gui", p(&q)])).unwrap();
    assert!(c["topic"].is_string());

    let index = d.join("index.ck");
    ok(&["index", "--model", p(&cls), "--data", p(&data), "--out", p(&index)]);
    let n: Value = serde_json::from_str(&ok(&["retrieve", "--index", p(&index), "--model", p(&cls), "--gui", p(&q), "-k", "3"])).unwrap();
    assert_eq!(n.as_array().unwrap().len(), 3);
}

#[test]
fn identical_seeds_give_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data");
    ok(&["gen-synthetic", "--seed", "4", "--count", "8", "--out", p(&data)]);
    for name in ["a.ck", "b.ck"] {
        ok(&["train", "--data", p(&data), "--epochs", "1", "--node-dim", "8", "--chunks", "1", "--seed", "9", "--out", p(&d.join(name))]);
    }
    assert_eq!(std::fs::read(d.join("a.ck")).unwrap(), std::fs::read(d.join("b.ck")).unwrap());
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("cfg.json");
    std::fs::write(&cfg, r#"{"count": 5, "seed": 2}"#).unwrap();
    ok(&["--config", p(&cfg), "gen-synthetic", "--out", p(&d.join("x"))]);
    assert_eq!(std::fs::read_dir(d.join("x")).unwrap().count(), 5);
    ok(&["--config", p(&cfg), "gen-synthetic", "--count", "3", "--out", p(&d.join("y"))]);
    assert_eq!(std::fs::read_dir(d.join("y")).unwrap().count(), 3);
}

#[test]
fn failures_have_codes_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let missing = run(&["extract-constraints", "--in", p(&dir.path().join("nope.json"))]);
    assert_eq!(missing.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&missing.stderr.split(|&b| b == b'\n').rfind(|l| !l.is_empty()).unwrap().to_vec()).unwrap();
    assert_eq!(err["error"], "io");

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"canvas":{"w":10,"h":10},"elements":[{"id":"a","kind":"Text"}]}"#).unwrap();
    assert_eq!(run(&["extract-constraints", "--in", p(&bad)]).status.code(), Some(1));
    assert_eq!(run(&["gen-synthetic"]).status.code(), Some(1));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}
