use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn wskit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wskit"))
        .args(args)
        .env_remove("WSKIT_SEED")
        .output()
        .expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON report")
}

fn write_tmp(name: &str, text: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("wskit-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const NET: &str = r#"{"dims":[2,3,1],"activation":"relu","channels":1,
  "layers":[{"W":[[1.0,-1.0],[0.5,2.0],[-1.5,0.25]],"b":[0.3,-0.1,0.7]},
            {"W":[[1.0,-2.0,0.5]],"b":[0.2]}]}"#;

#[test]
fn nft_counterexample_outputs() {
    let out = wskit(&["counterexample", "nft"]);
    assert_eq!(out.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["pass"], true);
    let o = r["results"]["outputs"].as_array().unwrap();
    assert!((o[0].as_f64().unwrap() - 8.0 / 33.0).abs() <= 1e-12);
    assert!((o[1].as_f64().unwrap() - 16.0 / 33.0).abs() <= 1e-12);
    assert!(o[0].to_string().starts_with("0.242424"));
}

#[test]
fn wl_counterexample_fields() {
    let r = report(&wskit(&["counterexample", "wl"]));
    assert_eq!(r["results"]["ranks"], serde_json::json!([3, 2]));
    assert_eq!(r["results"]["wl_distinguishable"], false);
    assert_eq!(r["results"]["g_equivalent"], false);
    assert_eq!(r["pass"], true);
}

#[test]
fn forward_on_zero_weights_is_zero() {
    let p = write_tmp(
        "zeros.json",
        r#"{"dims":[2,2,3],"activation":"relu","channels":1,
            "layers":[{"W":[[0,0],[0,0]],"b":[0,0]},{"W":[[0,0],[0,0],[0,0]],"b":[0,0,0]}]}"#,
    );
    let out = wskit(&["forward", p.to_str().unwrap(), "--x", "1.5,-2"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(report(&out)["results"]["output"], serde_json::json!([0.0, 0.0, 0.0]));
}

#[test]
fn act_then_canonize_agree() {
    let p = write_tmp("net.json", NET);
    let moved = wskit(&["act", p.to_str().unwrap(), "--perm", "1:2,0,1"]);
    assert_eq!(moved.status.code(), Some(0));
    let q = write_tmp("moved.json", &report(&moved)["results"]["weights"].to_string());
    let c1 = report(&wskit(&["canonize", p.to_str().unwrap()]));
    let c2 = report(&wskit(&["canonize", q.to_str().unwrap()]));
    assert_eq!(c1["results"]["representative"], c2["results"]["representative"]);
    let eq = wskit(&["equiv-test", p.to_str().unwrap(), q.to_str().unwrap()]);
    let r = report(&eq);
    assert_eq!(r["results"]["g_equivalent"], true);
    assert_eq!(r["results"]["witness"], serde_json::json!([[2, 0, 1]]));
    assert_eq!(r["results"]["functionally_equal"], true);
}

#[test]
fn tied_biases_fail_the_check() {
    let p = write_tmp(
        "tied.json",
        r#"{"dims":[1,2,1],"activation":"relu","channels":1,
            "layers":[{"W":[[1],[2]],"b":[0.5,0.5]},{"W":[[1,1]],"b":[0]}]}"#,
    );
    assert_eq!(wskit(&["gp-check", p.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(wskit(&["canonize", p.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn exit_codes() {
    let bad = write_tmp("bad.json", "{not json");
    assert_eq!(wskit(&["forward", bad.to_str().unwrap(), "--x", "1"]).status.code(), Some(3));
    assert_eq!(wskit(&["frobnicate"]).status.code(), Some(2));
    let p = write_tmp("net2.json", NET);
    assert_eq!(wskit(&["act", p.to_str().unwrap(), "--perm", "1:0,0,1"]).status.code(), Some(2));
    assert_eq!(wskit(&["counterexample", "scaling", "--lambda", "1"]).status.code(), Some(2));
}

#[test]
fn reports_are_byte_stable() {
    let a = wskit(&["simulate-ng-dws", "--seed", "4", "--arch", "2,3,2"]);
    let b = wskit(&["simulate-ng-dws", "--seed", "4", "--arch", "2,3,2"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let r = report(&a);
    assert_eq!(r["results"]["channels"]["c_in"], 1);
    assert_eq!(r["inputs_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn regions_and_graph() {
    let p = write_tmp(
        "one_d.json",
        r#"{"dims":[1,2,1],"activation":"relu","channels":1,
            "layers":[{"W":[[1],[-1]],"b":[0,1]},{"W":[[1,1]],"b":[0]}]}"#,
    );
    let r = report(&wskit(&["regions", p.to_str().unwrap(), "--interval", "-3,3"]));
    assert_eq!(r["results"]["num_regions"], 3);
    assert_eq!(r["pass"], true);
    let g = report(&wskit(&["graph", p.to_str().unwrap(), "--variant", "gmn", "--wl"]));
    assert_eq!(g["results"]["nodes"], 6);
    assert!(g["results"]["wl"]["colors"].is_array());
}

#[test]
fn suite_passes() {
    let out = wskit(&["suite"]);
    let r = report(&out);
    assert_eq!(r["results"]["criteria"].as_array().unwrap().len(), 10);
    assert_eq!(out.status.code(), Some(0), "{}", r);
}
