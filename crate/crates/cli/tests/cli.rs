use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn ordergap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ordergap")).args(args).output().unwrap()
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn verify_runs_a_single_module() {
    let out = ordergap(&["verify", "domain_rlm", "--quiet"]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<_> = stdout.lines().collect();
    assert_eq!(lines.len(), 1);
    assert!(lines[0].starts_with("PASS [ 8] domain_rlm"), "{}", lines[0]);
}

#[test]
fn unknown_suite_is_rejected() {
    let out = ordergap(&["verify", "everything"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown suite"));
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(config("bandit.toml")).unwrap().replace("lambda = 0.2", "lambda = 1.5");
    std::fs::write(&path, text).unwrap();
    let out = ordergap(&["analyze", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bandit.lambda: must lie in (0, 1)"));
}

#[test]
fn noisy_linear_run_respects_the_stopping_guarantee() {
    let dir = tempfile::tempdir().unwrap();
    let out = ordergap(
        &["run", "--config", config("linear_noisy.toml").to_str().unwrap(), "--seeds", "50", "--quiet", "--out"]
            .into_iter()
            .chain([dir.path().to_str().unwrap()])
            .collect::<Vec<_>>(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let exp = dir.path().join("linear-noisy");
    let report = read_json(exp.join("report.json"));
    let summary = &report["summary"];
    assert_eq!(summary["seeds"], 50);
    assert_eq!(summary["tau_checked"], 50);
    assert!(summary["tau_violation_fraction"].as_f64().unwrap() <= 0.1);
    assert_eq!(summary["endpoint_violations"], 0);
    let trace = std::fs::read_to_string(exp.join("seed_0049.csv")).unwrap();
    let digest = report["config_sha256"].as_str().unwrap();
    assert!(trace.lines().next().unwrap().contains(&format!("config_sha256={digest}")));
    assert!(exp.join("seed_0049.json").exists());
}

#[test]
fn uncovered_recursive_model_reports_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = ordergap(&[
        "run",
        "--config",
        config("rlm_uncovered.toml").to_str().unwrap(),
        "--quiet",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report = read_json(dir.path().join("rlm-uncovered/report.json"));
    assert_eq!(report["analysis"]["coverage"], "FAIL");
    assert!(report["analysis"]["constants"]["mu"].is_null());
    let warnings = report["analysis"]["warnings"].as_array().unwrap();
    assert!(warnings.iter().any(|w| w.as_str().unwrap().starts_with("coverage: FAIL")));
}

#[test]
fn stop_bounds_prints_json_and_writes_it_with_out() {
    let dir = tempfile::tempdir().unwrap();
    let out = ordergap(&[
        "stop-bounds",
        "--config",
        config("rlm_covered.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let printed: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(printed["bounds"]["n_eps"].as_u64().unwrap() > 0);
    assert!(printed["equilibrium"].is_null());
    assert_eq!(read_json(dir.path().join("rlm-covered/analysis.json")), printed);
}

#[test]
fn every_example_config_analyzes() {
    for entry in std::fs::read_dir(config("")).unwrap() {
        let path = entry.unwrap().path();
        let out = ordergap(&["analyze", "--config", path.to_str().unwrap()]);
        assert!(out.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
        let report: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(report["constants"]["gamma"].is_number(), "{}", path.display());
    }
}
