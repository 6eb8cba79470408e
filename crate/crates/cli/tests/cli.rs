use std::process::{Command, Output};

use tempfile::TempDir;

const ONE: &str = r#"{"n": 1, "m": 1, "k": 1, "players": [
  {"type": "coverage", "universe": [{"id": "a", "weight": 1.0}], "sets": {"1": ["a"]}}
]}"#;

const EX1: &str = r#"{"n": 2, "m": 4, "k": 3, "players": [
  {"type": "coverage", "universe": [{"id": "a", "weight": 1.0}, {"id": "b", "weight": 2.0}, {"id": "c", "weight": 0.5}],
   "sets": {"1": ["a", "b"], "2": ["b"], "3": ["b", "c"], "4": ["c"]}},
  {"type": "mrs", "terms": [
    {"weight": 1.5, "matroid": {"kind": "uniform", "rank": 2}},
    {"weight": 0.7, "matroid": {"kind": "graphic", "edges": [[0, 1], [1, 2], [2, 0], [2, 3]]}},
    {"weight": 1.0, "matroid": {"kind": "partition", "blocks": [[1, 4], [2, 3]], "caps": [1, 1]}}
  ]}
]}"#;

fn cppmech(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cppmech"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn allocate_is_byte_identical_for_a_seed() {
    let dir = TempDir::new().unwrap();
    let ex1 = write(&dir, "ex1.json", EX1);
    let run = |out: &str| {
        let out = dir.path().join(out);
        let res = cppmech(&["allocate", "--instance", &ex1, "--k", "2", "--seed", "7", "--out", out.to_str().unwrap()]);
        assert!(res.status.success());
        (res.stdout, std::fs::read(out).unwrap())
    };
    let (a_table, a_json) = run("a.json");
    let (b_table, b_json) = run("b.json");
    assert_eq!(a_table, b_table);
    assert_eq!(a_json, b_json);
    let v: serde_json::Value = serde_json::from_slice(&a_json).unwrap();
    assert_eq!(v["instance"]["k"], 2);
    assert_eq!(v["outcome"]["rng_trace"]["seed"], 7);
    assert!(v["brute_force"]["ratio"].as_f64().unwrap() >= 1.0 - 1.0 / std::f64::consts::E - 1e-3);
}

#[test]
fn single_player_single_project() {
    let dir = TempDir::new().unwrap();
    let one = write(&dir, "one.json", ONE);
    let v = json(&cppmech(&["allocate", "--instance", &one, "--seed", "1", "--format", "json"]));
    assert_eq!(v["outcome"]["chosen"], serde_json::json!([1]));
    assert_eq!(v["outcome"]["payments"], serde_json::json!([0.0]));
    assert_eq!(v["outcome"]["expected_payments"], serde_json::json!([0.0]));
    let table = String::from_utf8(cppmech(&["allocate", "--instance", &one, "--seed", "1"]).stdout).unwrap();
    assert!(table.contains("chosen    {1}"), "{table}");
}

#[test]
fn malformed_input_exits_2_and_names_the_field() {
    let dir = TempDir::new().unwrap();
    let truncated = write(&dir, "t.json", "{\"n\": 1,");
    let out = cppmech(&["allocate", "--instance", &truncated, "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));

    let negative = write(&dir, "neg.json", &ONE.replace("1.0", "-1.0"));
    let out = cppmech(&["audit", "--instance", &negative, "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("players[0].universe[0].weight"));

    let typo = write(&dir, "typo.json", &EX1.replace("\"rank\": 2", "\"rank\": \"two\""));
    let out = cppmech(&["solve", "--instance", &typo]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("players[1].terms[0].matroid.rank"));

    let missing = dir.path().join("missing.json");
    let out = cppmech(&["solve", "--instance", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(cppmech(&["solve", "--instance", &typo, "--tol", "0"]).status.code(), Some(2));
}

#[test]
fn capacity_errors_exit_3() {
    let x = vec!["0.05"; 22].join(",");
    let out = cppmech(&["distribution", "--x", &x, "--k", "2"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn distribution_examples() {
    let v = json(&cppmech(&["distribution", "--x", "1,1", "--k", "2", "--format", "json"]));
    let support = v["support"].as_array().unwrap();
    let prob = |set: serde_json::Value| {
        support
            .iter()
            .find(|r| r["set"] == set)
            .map(|r| r["probability"].as_f64().unwrap())
            .unwrap()
    };
    assert!((prob(serde_json::json!([1, 2])) - 0.5).abs() < 1e-12);
    assert!((prob(serde_json::json!([1])) - 0.25).abs() < 1e-12);
    assert!((prob(serde_json::json!([2])) - 0.25).abs() < 1e-12);

    let table = String::from_utf8(cppmech(&["distribution", "--x", "0.3", "--k", "1"]).stdout).unwrap();
    assert!(table.contains("sum                1.000000000"), "{table}");
    assert!(table.contains("∅                  0.700000000"), "{table}");
    assert!(table.contains("{1}                0.300000000"), "{table}");

    let out = cppmech(&["distribution", "--x", "0.3", "--k", "1", "--mc", "20000", "--seed", "4", "--format", "json"]);
    let v = json(&out);
    assert!(v["tv"].as_f64().unwrap() < 0.03);
    assert_eq!(v["seed"], 4);
}

#[test]
fn distribution_from_a_solve_artifact() {
    let dir = TempDir::new().unwrap();
    let ex1 = write(&dir, "ex1.json", EX1);
    let artifact = dir.path().join("solve.json");
    let out = cppmech(&["solve", "--instance", &ex1, "--out", artifact.to_str().unwrap()]);
    assert!(out.status.success());
    let v = json(&cppmech(&["distribution", "--from", artifact.to_str().unwrap(), "--format", "json"]));
    assert!((v["total"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(v["x"]["k"], 3);
}

#[test]
fn smoke_audit_passes() {
    let out = cppmech(&["audit", "--suite", "smoke", "--seed", "3", "--mc-samples", "20000"]);
    let table = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{table}");
    assert!(table.contains("PASS"));
}

#[test]
fn random_audit_is_deterministic() {
    let args = ["audit", "--suite", "random", "--count", "4", "--seed", "11", "--mc-samples", "20000", "--misreports", "4", "--format", "json"];
    let a = cppmech(&args);
    let b = cppmech(&args);
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    assert_eq!(v["seed"], 11);
    assert_eq!(v["instances"].as_array().unwrap().len(), 4);
    assert_eq!(v["passed"], true);
}

#[test]
fn payments_and_composed_allocation() {
    let dir = TempDir::new().unwrap();
    let ex1 = write(&dir, "ex1.json", EX1);
    let v = json(&cppmech(&["payments", "--instance", &ex1, "--seed", "2", "--rounding", "rkplus", "--format", "json"]));
    assert_eq!(v["config"]["rounding"], "rkplus");
    for (value, pay) in v["expected_values"].as_array().unwrap().iter().zip(v["expected_payments"].as_array().unwrap()) {
        let (value, pay) = (value.as_f64().unwrap(), pay.as_f64().unwrap());
        assert!(pay >= -1e-9 && value - pay >= -1e-9);
    }
    let v = json(&cppmech(&["allocate", "--composed", "--instance", &ex1, "--seed", "2", "--format", "json"]));
    assert_eq!(v["outcome"]["rng_trace"]["composition"]["exponent"], 16);
}

#[test]
fn solver_config_file_and_flags() {
    let dir = TempDir::new().unwrap();
    let ex1 = write(&dir, "ex1.json", EX1);
    let cfg = write(&dir, "cfg.json", r#"{"tol": 1e-9, "max_iters": 100, "shrink": 0.5, "sufficient_increase": 1e-4}"#);
    let v = json(&cppmech(&["solve", "--instance", &ex1, "--solver-config", &cfg, "--max-iters", "300", "--format", "json"]));
    assert_eq!(v["solver"]["tol"], 1e-9);
    assert_eq!(v["solver"]["max_iters"], 300);
    let bad = write(&dir, "bad.json", r#"{"tol": "small"}"#);
    assert_eq!(cppmech(&["solve", "--instance", &ex1, "--solver-config", &bad]).status.code(), Some(2));
}

#[test]
fn bench_reports_each_size() {
    let v = json(&cppmech(&["bench", "--count", "1", "--max-m", "6", "--seed", "5", "--format", "json"]));
    let ms: Vec<u64> = v["rows"].as_array().unwrap().iter().map(|r| r["m"].as_u64().unwrap()).collect();
    assert_eq!(ms, vec![2, 4, 6]);
}
