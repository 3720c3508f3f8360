use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn sph2(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sph2")).args(args).output().expect("run sph2")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn oracle_h2_on_unit_path() {
    let out = sph2(&["h2", "--graph", path(&fixture("unit_path.json")), "--method", "oracle"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["total_h2_squared"], 0.5);
    assert_eq!(v["method"], "dense-oracle");
    assert_eq!(v["per_source"]["s"], 0.5);
}

#[test]
fn methods_agree_and_bound_dominates() {
    let g = fixture("demo_graph.json");
    let total = |m: &str| stdout_json(&sph2(&["h2", "--graph", path(&g), "--method", m]))["total_h2_squared"].as_f64().unwrap();
    let (exact, oracle, bound) = (total("exact"), total("oracle"), total("bound"));
    assert!((exact - oracle).abs() <= 1e-9 * oracle);
    assert!(bound >= exact - 1e-9);
}

#[test]
fn check_passes_on_bundled_instances() {
    for name in ["unit_path.json", "aittsp_k1.json", "aittsp_k2.json", "aittsp_k3.json", "demo_graph.json"] {
        let out = sph2(&["check", "--graph", path(&fixture(name))]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        let v = stdout_json(&out);
        assert!(v["max_relative_error"].as_f64().unwrap() <= 1e-9);
        assert_eq!(v["pass"], true);
        for key in ["resistance", "currents", "voltages", "h2", "gradient"] {
            assert!(v[key].is_number(), "{key} missing");
        }
    }
}

#[test]
fn decompose_k4_names_the_stall() {
    let out = sph2(&["decompose", "--graph", path(&fixture("k4.json")), "--source", "s"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("not series-parallel") && err.contains("stalled"), "{err}");
}

#[test]
fn decompose_matches_bundled_tree() {
    let out = sph2(&["decompose", "--graph", path(&fixture("aittsp_k2.json")), "--source", "s1"]);
    assert_eq!(out.status.code(), Some(0));
    let expected: Value = serde_json::from_str(&std::fs::read_to_string(fixture("aittsp_k2_tree.json")).unwrap()).unwrap();
    assert_eq!(stdout_json(&out), expected);
    // a leader as sink means the grounded node
    let out = sph2(&["decompose", "--graph", path(&fixture("aittsp_k2.json")), "--source", "s1", "--sink", "r2"]);
    assert_eq!(stdout_json(&out), expected);
}

#[test]
fn resistance_annotations() {
    let out = sph2(&[
        "resistance",
        "--graph",
        path(&fixture("aittsp_k2.json")),
        "--tree",
        path(&fixture("aittsp_k2_tree.json")),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    let root = &v["0"];
    assert!(root["op"].is_string());
    // identity intensity enters at the root
    assert_eq!(root["current"], serde_json::json!([[1, 0], [0, 1]]));
    // root voltage equals root resistance times identity
    let flat = |m: &Value| -> Vec<f64> {
        m.as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap().iter().map(|x| x.as_f64().unwrap())).collect()
    };
    for (v, r) in flat(&root["voltage"]).into_iter().zip(flat(&root["resistance"])) {
        assert!((v - r).abs() < 1e-12);
    }
    let h2 = stdout_json(&sph2(&["h2", "--graph", path(&fixture("aittsp_k2.json")), "--method", "oracle"]));
    let r = root["resistance"].as_array().unwrap();
    let trace = r[0][0].as_f64().unwrap() + r[1][1].as_f64().unwrap();
    assert!((0.5 * trace - h2["per_source"]["s1"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn optimize_writes_trajectory_and_weights() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("traj.csv");
    let weights = dir.path().join("final.json");
    let out = sph2(&[
        "optimize",
        "--graph",
        path(&fixture("demo_graph.json")),
        "--config",
        path(&fixture("demo_config.json")),
        "--out",
        path(&csv),
        "--weights",
        path(&weights),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iter,objective,h2_squared,penalty,grad_norm"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert!(rows.len() > 1);
    assert!(rows.last().unwrap()[1] < rows[0][1]);
    for r in &rows {
        assert!((r[1] - r[2] - r[3]).abs() <= 1e-12 * r[1]);
    }
    // the final graph is itself a valid input
    let out = sph2(&["check", "--graph", path(&weights)]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn validation_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let text = r#"{
  "k": 1,
  "nodes": ["r", "s"],
  "edges": [
    {"id": "a", "tail": "r", "head": "s", "weight": [[1.0]]},
    {"id": "b", "tail": "s", "head": "r", "weight": [[-2.0]]}
  ],
  "leaders": ["r"]
}"#;
    std::fs::write(&bad, text).unwrap();
    let out = sph2(&["h2", "--graph", path(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.json:6:") && err.contains("`b`"), "{err}");

    std::fs::write(&bad, "{\n  \"k\": 1,\n  \"nodes\": [\"r\",,]\n}").unwrap();
    let out = sph2(&["h2", "--graph", path(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.json:3:"));

    std::fs::write(&bad, "{\"k\": 1, \"nodes\": [], \"edges\": [], \"leaders\": [], \"extra\": 0}").unwrap();
    assert_eq!(sph2(&["h2", "--graph", path(&bad)]).status.code(), Some(1));
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, "{\n  \"penalty\": 0.1,\n  \"bounds\": {\n    \"nope\": {\"lower\": [[1.0]], \"upper\": [[2.0]]}\n  }\n}").unwrap();
    let out = sph2(&[
        "optimize",
        "--graph",
        path(&fixture("unit_path.json")),
        "--config",
        path(&cfg),
        "--out",
        path(&dir.path().join("t.csv")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cfg.json:4:"));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(sph2(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(sph2(&["h2"]).status.code(), Some(1));
    assert_eq!(sph2(&["--help"]).status.code(), Some(0));
    let missing = sph2(&["h2", "--graph", "/nonexistent/g.json"]);
    assert_eq!(missing.status.code(), Some(1));
}
