mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::*;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_oversight");

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("RUST_LOG", "error").output().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn evaluate(dir: &Path, extra: &[&str]) -> (Output, Value) {
    let out_file = dir.join("compliance.json");
    let source = fixture("paracetamol_source.json");
    let mut args = vec![
        "evaluate",
        "--source",
        source.to_str().unwrap(),
        "--out",
        out_file.to_str().unwrap(),
        "--now",
        "2026-03-02T09:00:00Z",
    ];
    args.extend_from_slice(extra);
    let out = run(&args);
    let report = std::fs::read(&out_file)
        .ok()
        .map(|b| serde_json::from_slice(&b).unwrap())
        .unwrap_or(Value::Null);
    (out, report)
}

#[test]
fn clean_fixture_exits_zero_with_no_triggers() {
    let dir = tempfile::tempdir().unwrap();
    let (out, report) = evaluate(dir.path(), &["--profile", "p-general"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report["escalation"]["status"], "auto_released");
    assert_eq!(report["escalation"]["triggers"], serde_json::json!([]));
    assert_eq!(stdout_json(&out)["status"], "auto_released");
}

#[test]
fn dose_mutated_fixture_exits_two_with_f_contradiction() {
    let dir = tempfile::tempdir().unwrap();
    let artifact = fixture("paracetamol_dose_mutated_artifact.json");
    let (out, report) = evaluate(dir.path(), &["--profile", "p-general", "--artifact", artifact.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let f = report["checkpoints"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["checkpoint"] == "F")
        .unwrap();
    assert_eq!(f["passed"], false);
    let findings = f["detail"]["findings"].as_array().unwrap();
    assert_eq!(findings.len(), 1);
    assert_eq!(findings[0]["kind"], "contradiction");
    assert_eq!(findings[0]["field"], "dose");
    assert_eq!(findings[0]["severity"], "critical");
    assert!(report["escalation"]["triggers"]
        .as_array()
        .unwrap()
        .iter()
        .any(|t| t["checkpoint"] == "F"));
}

#[test]
fn untraceable_fixture_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let artifact = fixture("paracetamol_untraceable_artifact.json");
    let (out, report) = evaluate(dir.path(), &["--profile", "p-general", "--artifact", artifact.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(report["escalation"]["triggers"][0]["kind"], "traceability_failure");
}

#[test]
fn unknown_profile_exits_one_with_api_error_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let (out, _) = evaluate(dir.path(), &["--profile", "p-unknown"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["code"], "UNKNOWN_PROFILE");
    assert!(err["message"].is_string());
    assert!(!dir.path().join("compliance.json").exists());
}

#[test]
fn unreadable_source_exits_one() {
    let out = run(&["evaluate", "--source", "/nonexistent.json", "--profile", "p-general"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["code"], "BAD_REQUEST");
}

async fn populated_store(dir: &Path) {
    let (app, _) = open(dir);
    populate(&app).await;
}

#[tokio::test]
async fn verify_passes_on_a_pristine_store() {
    let dir = tempfile::tempdir().unwrap();
    populated_store(dir.path()).await;
    let out = run(&["verify", "--store", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = stdout_json(&out);
    assert_eq!(report["ok"], true);
    assert_eq!(report["audit"]["engine"]["unresolved_requirements"], serde_json::json!({}));
    assert_eq!(report["audit"]["engine"]["dangling_nodes"], serde_json::json!({}));
}

#[tokio::test]
async fn verify_reports_a_byte_flipped_feedback_event() {
    let dir = tempfile::tempdir().unwrap();
    populated_store(dir.path()).await;
    let log = dir.path().join("feedback.jsonl");
    flip_bit(&log, middle_of_line(&log, 1), 2);
    let out = run(&["verify", "--store", dir.path().to_str().unwrap()]);
    assert_ne!(out.status.code(), Some(0));
    let report = stdout_json(&out);
    assert_eq!(report["ok"], false);
    assert_eq!(report["audit"]["feedback_chain"]["valid"], false);
    assert_eq!(report["audit"]["feedback_chain"]["first_bad_index"], 1);
}

#[tokio::test]
async fn deleted_checkpoint_file_reports_missing_evidence() {
    let dir = tempfile::tempdir().unwrap();
    populated_store(dir.path()).await;
    let store = oversight_service::Store::open(dir.path());
    let id = store.artifact_ids().unwrap()[3].clone();
    std::fs::remove_file(store.artifact_file(&id, "checkpoints.json")).unwrap();
    let out = run(&["verify", "--store", dir.path().to_str().unwrap()]);
    assert_ne!(out.status.code(), Some(0));
    let report = stdout_json(&out);
    assert_eq!(report["audit"]["missing_evidence"][0]["artifact_id"], id.as_str());
    let replay = run(&["replay", "--store", dir.path().to_str().unwrap(), "--artifact", &id]);
    assert_ne!(replay.status.code(), Some(0));
    let r = stdout_json(&replay);
    assert_eq!(r["missing_evidence"][0]["file"], "checkpoints.json");
}

#[tokio::test]
async fn replay_and_export_report_on_a_store() {
    let dir = tempfile::tempdir().unwrap();
    populated_store(dir.path()).await;
    let root = dir.path().to_str().unwrap();
    let out = run(&["replay", "--store", root]);
    assert_eq!(out.status.code(), Some(0));
    let r = stdout_json(&out);
    let checks = r["replay"].as_array().unwrap();
    assert!(checks.len() >= 78);
    assert!(checks.iter().all(|c| c["matches"] == true));
    let id = checks[5]["artifact_id"].as_str().unwrap();
    let export = dir.path().join("export.json");
    let out = run(&["export-report", "--store", root, "--artifact", id, "--out", export.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let stored = std::fs::read(dir.path().join(format!("artifacts/{id}/compliance.json"))).unwrap();
    assert_eq!(std::fs::read(&export).unwrap(), stored);
    let missing = run(&["export-report", "--store", root, "--artifact", "art-nope"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn evaluate_into_a_store_passes_verify() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let s = store.to_str().unwrap();
    for extra in [
        vec!["--profile", "p-general"],
        vec!["--profile", "p-cognitive"],
        vec!["--profile", "p-lowvision"],
    ] {
        let mut args = extra.clone();
        args.extend(["--store", s]);
        let (out, _) = evaluate(dir.path(), &args);
        assert!(matches!(out.status.code(), Some(0 | 2 | 3)));
    }
    let mutated = fixture("paracetamol_dose_mutated_artifact.json");
    evaluate(dir.path(), &["--profile", "p-general", "--artifact", mutated.to_str().unwrap(), "--store", s]);
    let out = run(&["verify", "--store", s]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(stdout_json(&out)["audit"]["engine"]["artifacts"], 4);
}

#[test]
fn serve_refuses_a_corrupted_store() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let s = store.to_str().unwrap();
    let (out, _) = evaluate(dir.path(), &["--profile", "p-general", "--store", s]);
    assert_eq!(out.status.code(), Some(0));
    let rt = tokio::runtime::Runtime::new().unwrap();
    rt.block_on(async {
        let (app, _) = open(&store);
        populate(&app).await;
    });
    let log = store.join("feedback.jsonl");
    flip_bit(&log, middle_of_line(&log, 0), 5);
    let out = run(&["serve", "--store", s, "--port", "0"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["code"], "STORE_CORRUPT");
    assert_eq!(err["detail"]["first_bad_index"], 0);
}

#[test]
fn simulate_drift_reports_latency() {
    let out = run(&["simulate-drift", "--seed", "7", "--windows", "40", "--change-at", "20"]);
    assert_eq!(out.status.code(), Some(0));
    let r = stdout_json(&out);
    let latency = r["detection_latency"].as_u64().unwrap();
    assert!((1..=3).contains(&latency));
    let many = run(&["simulate-drift", "--runs", "20", "--windows", "100"]);
    let m = stdout_json(&many);
    assert_eq!(m["runs"], 20);
    assert!(m["per_window_false_alert_rate"].as_f64().unwrap() <= 0.01);
}
