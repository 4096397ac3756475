use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn randles(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_randles")).args(args).output().expect("binary runs")
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

/// Writes a modified copy of a shipped config into `dir`.
fn edited_config(dir: &Path, name: &str, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut doc: Value = serde_json::from_str(&fs::read_to_string(config(name)).unwrap()).unwrap();
    edit(&mut doc);
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
    path
}

#[test]
fn identifiability_verdicts() {
    let one = randles(&["identifiability", "--n", "1"]);
    assert!(one.status.success());
    let v = stdout_json(&one);
    assert_eq!(v["classification"], "globally_identifiable");
    assert_eq!(v["solution_count"], 1);

    let v = stdout_json(&randles(&["identifiability", "--n", "3"]));
    assert_eq!(v["classification"], "locally_identifiable");
    assert_eq!(v["solution_count"], 6);

    let v = stdout_json(&randles(&["identifiability", "--n", "3", "--ordered"]));
    assert_eq!(v["classification"], "globally_identifiable");
    assert_eq!(v["solution_count"], 1);
}

#[test]
fn identifiability_lists_witnesses() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    fs::write(&path, r#"{"r_inf": 0.05, "r": [0.2, 0.4], "c": [0.3, 0.6], "c_w": 300}"#).unwrap();
    let path = path.to_str().unwrap();
    let v = stdout_json(&randles(&["identifiability", "--n", "2", "--params", path]));
    assert_eq!(v["witnesses"].as_array().unwrap().len(), 2);
    let v = stdout_json(&randles(&["identifiability", "--n", "2", "--ordered", "--params", path]));
    assert_eq!(v["witnesses"].as_array().unwrap().len(), 1);
}

#[test]
fn identifiability_rejects_order_zero() {
    assert_eq!(randles(&["identifiability", "--n", "0"]).status.code(), Some(2));
}

#[test]
fn excite_writes_input_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = config("linear_excitation.json");
    let run = randles(&["excite", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("excitation_report.json")).unwrap()).unwrap();
    assert_eq!(report["pe_order"], 8);
    assert_eq!(report["required_order"], 7);
    assert!((report["crest_factor"].as_f64().unwrap() - 2.0).abs() < 0.01);
    let csv = fs::read_to_string(dir.path().join("input.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,u"));
    assert_eq!(csv.lines().count(), 1 + 50_000);
}

#[test]
fn excite_flags_insufficient_excitation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited_config(dir.path(), "linear_excitation.json", |d| {
        d["excitation"]["components"].as_array_mut().unwrap().truncate(3);
    });
    let run = randles(&["excite", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(1));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("excitation_report.json")).unwrap()).unwrap();
    assert_eq!(report["passes"], false);
}

#[test]
fn missing_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let run = randles(&["excite", "--config", "/nonexistent/config.json", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn unknown_config_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited_config(dir.path(), "reference_noise_free.json", |d| {
        d["trails"] = 3.into();
    });
    let run = randles(&["study", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic_given_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("reference_noisy.json");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    for (out, seed) in [(&a, "4"), (&b, "4"), (&c, "5")] {
        let run = randles(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", seed]);
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    }
    let read = |p: &Path| fs::read_to_string(p.join("data.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(read(&a).lines().next(), Some("t,u,y"));
}

#[test]
fn study_rejects_zero_trials() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited_config(dir.path(), "reference_noise_free.json", |d| d["trials"] = 0.into());
    let run = randles(&["study", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn noise_free_study_reproduces_the_truth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("reference_noise_free.json");
    let outputs: Vec<PathBuf> = ["a", "b"].iter().map(|s| dir.path().join(s)).collect();
    for out in &outputs {
        let run = randles(&["study", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    }
    let stats: Value = serde_json::from_str(&fs::read_to_string(outputs[0].join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["trials"], 100);
    for p in stats["parameters"].as_array().unwrap() {
        assert!(p["e_r"].as_f64().unwrap() < 0.01, "{p}");
    }
    for file in ["stats.json", "trials.json", "hist_c_w.csv"] {
        assert_eq!(
            fs::read(outputs[0].join(file)).unwrap(),
            fs::read(outputs[1].join(file)).unwrap(),
            "{file}"
        );
    }
}
