use std::path::Path;
use std::process::{Command, Output};

fn renewal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_renewal"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const MC_SCENARIO: &str = r#"{
  "id": "mc_walk",
  "description": "Monte Carlo on a signed walk",
  "model": { "kind": "lattice", "offset": -1, "probs": [0.2, 0.0, 0.5, 0.3] },
  "weights": { "kind": "constant", "c": 1.0 },
  "predictor": { "formula": "weighted" },
  "x": [20, 30],
  "delta": 1,
  "method": "mc",
  "mc_paths": 4000,
  "seed": 11,
  "tolerance": 0.2
}"#;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn bundled_unit_weight_run_writes_unit_ratios() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = renewal(&["run", "--scenario", "blackwell", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    let mut rdr = csv::Reader::from_path(out.join("blackwell.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let ratio = headers.iter().position(|h| h == "ratio").unwrap();
    let mut rows = 0;
    for rec in rdr.records() {
        let r: f64 = rec.unwrap()[ratio].parse().unwrap();
        assert!((r - 1.0).abs() < 1e-3);
        rows += 1;
    }
    assert_eq!(rows, 201);

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary[0]["id"], "blackwell");
    assert_eq!(summary[0]["pass"], true);
}

#[test]
fn nonpositive_delta_is_a_schema_error_with_the_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let bad = MC_SCENARIO.replace("\"delta\": 1", "\"delta\": -1");
    let cfg = write(dir.path(), "bad.json", &bad);
    let out = dir.path().join("out");
    let o = renewal(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("delta"), "{msg}");
    assert!(!out.exists(), "nothing is written on a schema error");
}

#[test]
fn unknown_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad = MC_SCENARIO.replace("\"seed\": 11", "\"seed\": 11, \"sead\": 3");
    let cfg = write(dir.path(), "bad.json", &bad);
    let o = renewal(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sead"));
}

#[test]
fn list_scenarios_names_the_catalogue() {
    let o = renewal(&["run", "--list-scenarios"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    for id in ["blackwell", "periodic", "sqrt", "harmonic_heavy", "stable", "cramer_arith", "divergent"] {
        assert!(text.lines().any(|l| l.starts_with(id)), "{id} missing");
    }
}

#[test]
fn same_seed_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "mc.json", MC_SCENARIO);
    let run = |name: &str, jobs: &str| {
        let out = dir.path().join(name);
        let o = renewal(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--jobs", jobs]);
        assert!(o.status.code().is_some_and(|c| c <= 1), "{}", stderr(&o));
        std::fs::read(out.join("mc_walk.csv")).unwrap()
    };
    let a = run("a", "1");
    let b = run("b", "4");
    assert_eq!(a, b);

    let out = dir.path().join("c");
    renewal(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "12"]);
    assert_ne!(a, std::fs::read(out.join("mc_walk.csv")).unwrap());
}

#[test]
fn failing_scenario_writes_no_csv_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    // A driftless walk has no renewal mean, so the engine rejects it.
    let bad = MC_SCENARIO
        .replace("\"probs\": [0.2, 0.0, 0.5, 0.3]", "\"probs\": [0.5, 0.0, 0.5]")
        .replace("\"method\": \"mc\",", "");
    let cfg = write(dir.path(), "err.json", &bad);
    let out = dir.path().join("out");
    let o = renewal(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
    assert!(!out.join("mc_walk.csv").exists());
}

#[test]
fn divergent_scenario_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = renewal(&["run", "--scenario", "divergent", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary[0]["summary"]["refused"].is_string(), "{summary}");
}

#[test]
fn predict_and_check_emit_json() {
    let model = r#"{"kind":"lattice","offset":1,"probs":[0.5,0.5]}"#;
    let o = renewal(&[
        "predict", "--formula", "weighted", "--model", model, "--weights", r#"{"kind":"constant","c":1}"#, "--x", "100",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let p: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(p["formula"], "weighted");
    assert!((p["value"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-15);

    let o = renewal(&["check", "--lemma3", "--model", model, "--n", "20", "--x", "30"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r["ineq1"]["margin"].as_f64().unwrap() > 0.0);

    let o = renewal(&["predict", "--formula", "nonsense", "--model", model, "--weights", "{}", "--x", "1"]);
    assert_eq!(o.status.code(), Some(2));
}
