use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn jumpsde(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jumpsde")).args(args).arg("--out").arg(dir).output().unwrap()
}

#[test]
fn check_on_refracted_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = jumpsde(tmp.path(), &["check", "--set", "model.builtin=refracted"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("check.json")).unwrap()).unwrap();
    let ids: Vec<&str> = report["conditions"].as_array().unwrap().iter().map(|c| c["id"].as_str().unwrap()).collect();
    for id in ["3a", "4a", "4b", "mod_f"] {
        assert!(ids.contains(&id));
    }
    assert_eq!(report["verdict"], "consistent");
    assert_eq!(report["seed_base"], 0);
    assert!(!report["config_hash"].as_str().unwrap().is_empty());
}

#[test]
fn zero_model_gives_a_constant_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = jumpsde(tmp.path(), &["simulate", "-s", "model.builtin=zero", "-s", "experiment.n_paths=3"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(tmp.path().join("path_0.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("time,left,value,mark"));
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!((cols[1], cols[2]), ("0", "0"));
    }
}

#[test]
fn weak_with_equal_samplers_is_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["weak", "-s", "model.builtin=refracted", "-s", "experiment.sampler_b=euler", "-s", "experiment.n_paths=200"];
    assert_eq!(jumpsde(tmp.path(), &args).status.code(), Some(0));
}

#[test]
fn step_sigma_fails_linear_modulus() {
    let tmp = tempfile::tempdir().unwrap();
    let out = jumpsde(tmp.path(), &["check", "-s", "model.builtin=step_sigma", "-s", "experiment.conditions=[\"mod_rho\"]"]);
    assert_eq!(out.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("check.json")).unwrap()).unwrap();
    assert_eq!(report["verdict"], "violated");
    assert_eq!(report["witness"]["statistic"], "mod_rho");
}

#[test]
fn errors_exit_above_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = jumpsde(tmp.path(), &["check", "-s", "model.builtin=nope"]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("nope"));
    let unknown = jumpsde(tmp.path(), &["check", "-s", "numerics.step=1"]);
    assert_eq!(unknown.status.code(), Some(3));
    let short = jumpsde(tmp.path(), &["weak", "-s", "model.builtin=refracted", "-s", "experiment.n_paths=10"]);
    assert_eq!(short.status.code(), Some(3));
    assert!(!tmp.path().join("weak.json").exists());
}
