use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bitrade(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bitrade")).args(args).env_remove("BITRADE_MODE").output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = path(dir, name);
    std::fs::write(&p, text).unwrap();
    p
}

fn number(v: &Value) -> f64 {
    match v {
        Value::Number(n) => n.as_f64().unwrap(),
        Value::String(s) => match s.split_once('/') {
            Some((n, d)) => n.parse::<f64>().unwrap() / d.parse::<f64>().unwrap(),
            None => s.parse().unwrap(),
        },
        other => panic!("not a number: {other}"),
    }
}

#[test]
fn repro_tightness_passes() {
    let out = bitrade(&["repro", "thm3.1", "--grid", "1e-4"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["target"]["computed"].as_f64().unwrap() - 1.5820).abs() < 1e-3);
    assert_eq!(v["target"]["pass"], Value::Bool(true));
}

#[test]
fn unknown_target_is_a_usage_error() {
    let out = bitrade(&["repro", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
    assert_eq!(bitrade(&["eval"]).status.code(), Some(2));
    assert_eq!(bitrade(&["nonsense"]).status.code(), Some(2));
}

#[test]
fn best_on_three_cells() {
    let dir = TempDir::new().unwrap();
    let d =
        write(&dir, "d.json", r#"{"cells":[{"s":0,"b":1,"p":"1/2"},{"s":0,"b":2,"p":"1/4"},{"s":1,"b":2,"p":"1/4"}]}"#);
    let out = bitrade(&["best", "--dist", &d, "--objective", "welfare"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["rule"]["cells"].as_array().unwrap().len(), 3);
    assert_eq!(v["ratio"], Value::String("1/1".into()));
}

#[test]
fn dist_mech_eval_pipeline() {
    let dir = TempDir::new().unwrap();
    let d = path(&dir, "d.json");
    let m = path(&dir, "m.json");
    assert_eq!(bitrade(&["dist", "simple-2x2", "--out", &d]).status.code(), Some(0));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&d).unwrap()).unwrap();
    let s2 = doc["cells"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["s"].as_str().unwrap())
        .max_by_key(|s| s.len())
        .unwrap()
        .to_owned();
    let out = bitrade(&["mech", "fixed-price", "--dist", &d, "--price", &s2, "--out", &m]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = bitrade(&["eval", "--dist", &d, "--mech", &m]);
    assert_eq!(out.status.code(), Some(0));
    let ratio = number(&json(&out)["ratio_welfare"]);
    assert!(ratio > 1.1134 && ratio < 1.114, "{ratio}");
    let out = bitrade(&["feas", "--dist", &d, "--mech", &m, "--ic", "dsic"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn infeasible_rule_exits_one() {
    let dir = TempDir::new().unwrap();
    let d = path(&dir, "d.json");
    assert_eq!(bitrade(&["dist", "simple-2x2", "--out", &d]).status.code(), Some(0));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&d).unwrap()).unwrap();
    let cells: Vec<Value> = doc["cells"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| {
            let trade = number(&c["s"]) <= number(&c["b"]);
            serde_json::json!({"s": c["s"], "b": c["b"], "x": if trade { 1 } else { 0 }})
        })
        .collect();
    let r = write(&dir, "r.json", &serde_json::json!({ "cells": cells }).to_string());
    let out = bitrade(&["feas", "--dist", &d, "--rule", &r]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    assert_eq!(v["feasible"], Value::Bool(false));
    assert!(!v["certificate"].as_array().unwrap().is_empty());
}

#[test]
fn double_auction_example() {
    let out = bitrade(&["da", "--sellers", "1,3", "--buyers", "5,4"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["rule"], Value::String("trade-reduction".into()));
    assert_eq!(v["buyer_payments"], Value::String("4/1".into()));
    assert_eq!(v["seller_receipts"], Value::String("3/1".into()));

    let dir = TempDir::new().unwrap();
    let cond = write(&dir, "c.json", r#"{"atoms":[{"v":0,"p":1}]}"#);
    let out = bitrade(&["da", "--sellers", "0", "--buyers", "10,2", "--cond", &cond]);
    let v = json(&out);
    assert_eq!(v["rule"], Value::String("buyer-offer".into()));
    assert_eq!(v["welfare"], Value::String("10/1".into()));
}

#[test]
fn mode_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_bitrade"))
        .args(["dist", "l-shaped-gft", "--k", "2"])
        .env("BITRADE_MODE", "approx")
        .output()
        .unwrap();
    let v = json(&out);
    assert_eq!(v["mode"], Value::String("approx".into()));
    assert!(v["cells"][0]["p"].is_number());
    let exact = json(&bitrade(&["dist", "l-shaped-gft", "--k", "2"]));
    assert_eq!(exact["mode"], Value::String("exact".into()));
    assert_eq!(bitrade(&["dist", "tightness", "--mode", "exact"]).status.code(), Some(2));
}

#[test]
fn csv_tables_and_out_files() {
    let dir = TempDir::new().unwrap();
    let out = bitrade(&["repro", "thm5.2", "--k", "3", "--csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,computed,expected,relative_error,pass"));
    assert_eq!(lines.count(), 2);

    let p = path(&dir, "t.csv");
    assert_eq!(bitrade(&["repro", "thm5.4", "--k", "3", "--csv", "--out", &p]).status.code(), Some(0));
    assert!(std::fs::read_to_string(&p).unwrap().starts_with("k,"));
    assert!(Path::new(&p).exists());
    assert_eq!(bitrade(&["da", "--sellers", "1", "--buyers", "2", "--csv"]).status.code(), Some(2));
}

#[test]
fn output_is_deterministic() {
    let a = bitrade(&["repro", "thm5.1"]);
    let b = bitrade(&["repro", "thm5.1"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let a = bitrade(&["dist", "dsic-unbounded", "--k", "3"]);
    let b = bitrade(&["dist", "dsic-unbounded", "--k", "3"]);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn randomized_target_reports_failure() {
    // The printed trade probability leaves a ratio near 1.0001.
    let out = bitrade(&["repro", "claimB.1"]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    assert!((v["target"]["computed"].as_f64().unwrap() - 1.000102).abs() < 1e-6);
}
