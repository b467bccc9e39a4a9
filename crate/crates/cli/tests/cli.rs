use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bkstack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bkstack")).args(args).output().expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

const MODULE: &str = r#"{"tau":{"p":3,"f":2,"z":[1,2]},"frobs":[
 {"i":0,"s1":{"prec":8,"terms":[[1,["2"]]]},"s2":{"prec":8,"terms":[[0,["1"]]]},
  "s3":{"prec":8,"terms":[[0,["1"]],[2,["1"]]]},"s4":{"prec":8,"terms":[[0,["1"]]]}},
 {"i":1,"s1":{"prec":8,"terms":[[1,["1"]]]},"s2":{"prec":8,"terms":[[0,["2"]]]},
  "s3":{"prec":8,"terms":[[0,["1"]]]},"s4":{"prec":8,"terms":[[0,["1"]]]}}]}"#;

const ACTION: &str = r#"{"tau":{"p":3,"f":2,"z":[1,2]},"ring":{"p":3},
 "g":{"lambda":["2"],"mu":["1"],"r":[["2"]],"y":[["1"],["2"]]},
 "x":{"a":[[["2"],["1"],["1"],["1"]],[["1"],["1"],["0"],["1"]]]}}"#;

#[test]
fn check_type_obstructions_and_weight() {
    let out = bkstack(&["check-type", "--p", "3", "--z", "1,2"]);
    assert!(out.status.success());
    let v = json_of(&out);
    assert_eq!(v["first_obstruction"], false);
    assert_eq!(v["second_obstruction"], false);
    assert_eq!(v["weight"]["b"], serde_json::json!([1, 0]));
    assert_eq!(v["eligible"], true);

    let v = json_of(&bkstack(&["check-type", "--p", "3", "--z", "1"]));
    assert_eq!(v["first_obstruction"], true);
    let v = json_of(&bkstack(&["check-type", "--p", "3", "--f", "2", "--z", "2,0"]));
    assert_eq!(v["second_obstruction"], true);
}

#[test]
fn check_type_with_t_and_weight_input() {
    let v = json_of(&bkstack(&["check-type", "--p", "3", "--z", "1,2", "--T", "0"]));
    assert_eq!(v["T"]["set"]["members"], serde_json::json!([0]));
    assert_eq!(v["T"]["tilde_z"].as_array().map(Vec::len), Some(2));
    let v = json_of(&bkstack(&["check-type", "--p", "5", "--weight", "2"]));
    assert_eq!(v["tau"]["p"], 5);
    assert_eq!(v["tau"]["f"], 1);
}

#[test]
fn check_type_rejects_bad_input() {
    assert_eq!(bkstack(&["check-type", "--p", "4", "--z", "1"]).status.code(), Some(2));
    assert_eq!(bkstack(&["check-type", "--p", "3", "--f", "3", "--z", "1,2"]).status.code(), Some(2));
    assert_eq!(bkstack(&["check-type", "--p", "3", "--z", "1,5"]).status.code(), Some(2));
}

#[test]
fn enumerate_weights_counts() {
    let v = json_of(&bkstack(&["enumerate-weights", "--p", "3", "--f", "2"]));
    assert_eq!(v["eligible"], 4);
    assert_eq!(v["non_steinberg"], 8);
    let v = json_of(&bkstack(&["enumerate-weights", "--p", "3", "--f", "1"]));
    assert_eq!(v["eligible"], 0);
    assert_eq!(v["non_steinberg"], 2);
    let v = json_of(&bkstack(&["enumerate-weights", "--p", "5", "--f", "1"]));
    let eligible: Vec<_> = v["rows"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|r| r["eligible"] == true)
        .map(|r| r["b"][0].as_u64().unwrap())
        .collect();
    assert_eq!(eligible, vec![1, 2]);

    let csv = bkstack(&["enumerate-weights", "--p", "3", "--f", "2", "--format", "csv"]);
    let text = String::from_utf8(csv.stdout).unwrap();
    assert!(text.starts_with("b,eligible,diagnosis\n"));
    assert_eq!(text.lines().filter(|l| l.contains(",true,")).count(), 4);
}

#[test]
fn enumerate_weights_bounds() {
    assert_eq!(bkstack(&["enumerate-weights", "--p", "17", "--f", "1"]).status.code(), Some(2));
    assert_eq!(bkstack(&["enumerate-weights", "--p", "3", "--f", "7"]).status.code(), Some(2));
}

#[test]
fn reduce_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "m.json", MODULE);
    let outp = dir.path().join("out.json");
    let out = bkstack(&["reduce", "--in", &input, "--out", outp.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&outp).unwrap()).unwrap();
    assert_eq!(v["bad_genre"], false);
    assert_eq!(v["params"]["genres"], serde_json::json!(["I_eta", "I_eta"]));
    assert!(v["steps"].as_u64().unwrap() <= v["budget"].as_u64().unwrap());
    assert_eq!(v["ring"]["p"], 3);
    assert_eq!(v["ring"]["N_v"], 8);

    // the reduced module reduces to itself
    let again = write(dir.path(), "r.json", &v["reduced"].to_string());
    let w = json_of(&bkstack(&["reduce", "--in", &again]));
    assert_eq!(w["params"], v["params"]);
}

#[test]
fn reduce_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(bkstack(&["reduce", "--in", "/nonexistent.json"]).status.code(), Some(2));
    let bad = write(dir.path(), "bad.json", "{\"tau\": 3}");
    assert_eq!(bkstack(&["reduce", "--in", &bad]).status.code(), Some(2));
    let input = write(dir.path(), "m.json", MODULE);
    assert_eq!(bkstack(&["reduce", "--in", &input, "--max-sweeps", "1"]).status.code(), Some(3));
}

#[test]
fn straighten_identity_holds() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "a.json", ACTION);
    let out = bkstack(&["straighten", "--in", &input]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_of(&out);
    assert_eq!(v["identity_holds"], true);
    assert_eq!(v["J"].as_array().map(Vec::len), Some(2));
    assert_eq!(v["ring"]["field_polynomial"].is_string(), true);
}

#[test]
fn verify_default_suites_pass() {
    let out = bkstack(&["verify", "--samples", "8", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_of(&out);
    assert_eq!(v["passed"], true);
    assert_eq!(v["tau"]["z"], serde_json::json!([1, 2]));
    assert_eq!(v["rings"].as_object().unwrap().len(), 3);
    // deterministic for a fixed seed
    let again = json_of(&bkstack(&["verify", "--samples", "8", "--seed", "3"]));
    assert_eq!(v, again);
}

#[test]
fn verify_reports_reachability_witness() {
    let out = bkstack(&["verify", "--suite", "straighten", "--z", "2,0", "--samples", "30"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json_of(&out);
    let w = &v["rings"]["F3"]["suites"]["straighten"]["notes"]["reachability_witness"];
    assert_eq!(w["index"], 1);
}
