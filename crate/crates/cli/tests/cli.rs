use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn rolemodel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rolemodel")).args(args).output().expect("spawn rolemodel")
}

fn ok(args: &[&str]) {
    let out = rolemodel(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

fn error_json(out: &Output) -> Value {
    serde_json::from_str(String::from_utf8_lossy(&out.stderr).trim()).expect("stderr is one JSON object")
}

/// Synthetic unit written by the CLI itself.
fn unit(dir: &Path, n: usize, events: f64, seed: u64) -> (PathBuf, PathBuf) {
    let out = dir.join(format!("unit-{n}-{seed}"));
    ok(&[
        "gen-synthetic",
        "--n-residents",
        &n.to_string(),
        "--expected-events",
        &events.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        s(&out),
    ]);
    (out.join("residents.csv"), out.join("events.csv"))
}

fn spec<'a>(estimates: &'a Value, name: &str) -> &'a Value {
    estimates.as_array().unwrap().iter().find(|s| s["name"] == name).unwrap_or_else(|| panic!("no spec {name}"))
}

fn coefficient(spec: &Value, label: &str) -> f64 {
    let report = &spec["report"];
    let k = report["labels"].as_array().unwrap().iter().position(|l| l == label).unwrap();
    report["coefficients"][k].as_f64().unwrap()
}

#[test]
fn missing_input_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, events) = unit(tmp.path(), 60, 600.0, 1);
    let out = rolemodel(&["estimate", "--residents", "no/such/residents.csv", "--events", s(&events), "--out", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = error_json(&out);
    assert_eq!(err["error"]["kind"], "config");
    assert!(err["error"]["message"].as_str().unwrap().contains("no/such/residents.csv"));
}

#[test]
fn schema_violation_reports_row_and_data_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let (res, events) = unit(tmp.path(), 60, 600.0, 2);
    let mut text = std::fs::read_to_string(&res).unwrap();
    text.push_str("r9999,10,400,1,30.0,1,20.0\n");
    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, text).unwrap();
    let out = rolemodel(&["estimate", "--residents", s(&bad), "--events", s(&events), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
    let msg = error_json(&out)["error"]["message"].as_str().unwrap().to_string();
    assert!(msg.contains("bad.csv") && msg.contains("row 61"), "{msg}");
}

#[test]
fn usage_errors_exit_with_config_code() {
    assert_eq!(rolemodel(&["simulate", "--study", "Z"]).status.code(), Some(2));
    assert_eq!(rolemodel(&["simulate", "--reps", "0", "--out", "/nonexistent/never"]).status.code(), Some(2));
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = tmp.path().join("run.conf");
    std::fs::write(&conf, "# study settings\nstudy = D\nreps = 2\nsweep = 0.5\nseed = 5\nk_clusters = 3\ncutoff-percentile = 90\n").unwrap();
    let out = tmp.path().join("sim");
    ok(&["simulate", "--config", s(&conf), "--seed", "6", "--out", s(&out)]);
    let manifest = json(out.join("manifest.json"));
    assert_eq!(manifest["seed"], 6);
    assert_eq!(manifest["config"]["study"], "D");
    assert_eq!(manifest["config"]["k-clusters"], 3);
    let table = std::fs::read_to_string(out.join("bias_table.csv")).unwrap();
    assert!(table.lines().skip(1).all(|l| l.starts_with("0.5,")));

    std::fs::write(&conf, "no-such-flag = 1\n").unwrap();
    let bad = rolemodel(&["simulate", "--config", s(&conf), "--out", s(&out)]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn manifest_reruns_the_command() {
    let tmp = tempfile::tempdir().unwrap();
    let (res, events) = unit(tmp.path(), 120, 2500.0, 3);
    let first = tmp.path().join("first");
    ok(&["estimate", "--residents", s(&res), "--events", s(&events), "--logistic", "--seed", "9", "--out", s(&first)]);
    let again = tmp.path().join("again");
    ok(&["estimate", "--config", s(&first.join("manifest.json")), "--out", s(&again)]);
    for name in json(first.join("manifest.json"))["outputs"].as_array().unwrap() {
        let name = name.as_str().unwrap();
        assert_eq!(std::fs::read(first.join(name)).unwrap(), std::fs::read(again.join(name)).unwrap(), "{name}");
    }
    assert_eq!(std::fs::read(first.join("manifest.json")).unwrap(), std::fs::read(again.join("manifest.json")).unwrap());
}

#[test]
fn estimate_does_not_touch_inputs_and_def2_uses_fewer_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let (res, events) = unit(tmp.path(), 200, 4400.0, 4);
    let before = (std::fs::read(&res).unwrap(), std::fs::read(&events).unwrap());
    let d1 = tmp.path().join("d1");
    let d2 = tmp.path().join("d2");
    ok(&["estimate", "--residents", s(&res), "--events", s(&events), "--out", s(&d1)]);
    ok(&["estimate", "--residents", s(&res), "--events", s(&events), "--definition", "def2", "--out", s(&d2)]);
    assert_eq!(before, (std::fs::read(&res).unwrap(), std::fs::read(&events).unwrap()));
    let n1 = spec(&json(d1.join("estimates.json")), "bias-corrected")["report"]["n_obs"].as_u64().unwrap();
    let n2 = spec(&json(d2.join("estimates.json")), "bias-corrected")["report"]["n_obs"].as_u64().unwrap();
    assert!(n2 <= n1);
}

#[test]
fn binarized_and_weighted_reports_on_planted_positive_data() {
    let tmp = tempfile::tempdir().unwrap();
    let (res, events) = unit(tmp.path(), 800, 15000.0, 6);
    let out = tmp.path().join("est");
    ok(&["estimate", "--residents", s(&res), "--events", s(&events), "--binarize", "--seed", "6", "--out", s(&out)]);
    let est = json(out.join("estimates.json"));
    let weighted = spec(&est, "bias-corrected");
    let binary = spec(&est, "bias-corrected-binarized");
    assert_eq!(binary["binarized"], true);
    assert!(coefficient(weighted, "peer_grad") > 0.0);
    assert!(coefficient(binary, "peer_grad") > 0.0);
    assert!(out.join("bias-corrected-binarized.csv").exists());
}

fn summary(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn counterfactual_cutoffs_and_buddy_weight() {
    let tmp = tempfile::tempdir().unwrap();
    let (res, events) = unit(tmp.path(), 400, 7400.0, 0);
    let out = tmp.path().join("cf");
    ok(&["counterfactual", "--residents", s(&res), "--events", s(&events), "--true-failures", "--out", s(&out)]);
    let rows = summary(&out.join("cascade_summary.csv"));
    assert_eq!(rows.len(), 4);
    let treated: Vec<usize> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(treated[0] <= treated[1] && treated[1] <= treated[2], "{treated:?}");
    for r in &rows {
        let pre: usize = r[5].parse().unwrap();
        let post: usize = r[6].parse().unwrap();
        assert!(post <= pre);
    }
    let tf = &rows[3];
    assert_eq!(tf[0], "true-failures");
    assert!(tf[6].parse::<usize>().unwrap() <= tf[4].parse::<usize>().unwrap());
    for name in ["cascade_lsi_p90.json", "cascade_lsi_p80.json", "cascade_lsi_p75.json", "cascade_true_failures.json"] {
        assert!(out.join(name).exists(), "{name}");
    }

    let zero = tmp.path().join("zero");
    ok(&["counterfactual", "--residents", s(&res), "--events", s(&events), "--buddy-weight", "0", "--true-failures", "--out", s(&zero)]);
    for r in summary(&zero.join("cascade_summary.csv")) {
        assert_eq!(r[3], "0");
        assert_eq!(r[5], r[6]);
    }

    let neg = rolemodel(&["counterfactual", "--residents", s(&res), "--events", s(&events), "--buddy-weight=-1", "--out", s(&zero)]);
    assert_eq!(neg.status.code(), Some(2));
}

#[test]
fn embed_from_dense_graph() {
    let tmp = tempfile::tempdir().unwrap();
    let g = tmp.path().join("g.csv");
    // Two triangles joined by one edge.
    let a = [
        [0, 1, 1, 0, 0, 0],
        [1, 0, 1, 0, 0, 0],
        [1, 1, 0, 1, 0, 0],
        [0, 0, 1, 0, 1, 1],
        [0, 0, 0, 1, 0, 1],
        [0, 0, 0, 1, 1, 0],
    ];
    let text: String = a.iter().map(|r| r.map(|v| v.to_string()).join(",") + "\n").collect();
    std::fs::write(&g, text).unwrap();
    let out = tmp.path().join("emb");
    ok(&["embed", "--graph", s(&g), "--d", "2", "--out", s(&out)]);
    let emb = std::fs::read_to_string(out.join("embedding.csv")).unwrap();
    assert_eq!(emb.lines().count(), 6);
    let summary = json(out.join("embed_summary.json"));
    assert_eq!(summary["graph"]["edges"], 7);
}
