//! Acceptance suite: one PASS/FAIL line per primary criterion.
//!
//! Runs as a plain binary (`harness = false`) and exits nonzero when any
//! criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod engine_fixtures;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use oversight_core::catalog;
use oversight_core::checkpoints::factual::{check_factual_consistency, FactField, Severity};
use oversight_core::checkpoints::readability::{count_text, score_readability};
use oversight_core::digest::GENESIS_HASH;
use oversight_core::escalation::{release_gate, EscalationDecision, EscalationStatus, ReleaseState, ReviewerRole};
use oversight_core::generation::{dose_phrase, frequency_phrase, route_phrase};
use oversight_core::review::{FeedbackEvent, ReviewDecision};
use oversight_core::supervision::{simulate_drift, DriftConfig, SimulationSpec};
use oversight_core::trace::{MedicationRecord, Route};
use oversight_core::{Engine, UiArtifact, UiNode};
use oversight_service::store::{Genesis, Store, FEEDBACK_LOG, GOVERNANCE_LOG};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;

fn check(cond: bool, pass: String, fail: impl FnOnce() -> String) -> Outcome {
    if cond {
        Ok(pass)
    } else {
        Err(fail())
    }
}

fn manifest() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

fn fixture(name: &str) -> PathBuf {
    manifest().join("../../fixtures").join(name)
}

#[derive(serde::Deserialize)]
struct OracleRow {
    id: String,
    text: String,
    syllables: usize,
    words: usize,
    sentences: usize,
    fernandez_huerta: f64,
    szigriszt_pazos: f64,
}

fn readability_oracle() -> Outcome {
    let path = manifest().join("../core/tests/fixtures/readability_oracle.csv");
    let rows: Vec<OracleRow> = csv::Reader::from_path(&path)
        .map_err(|e| e.to_string())?
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let start = Instant::now();
    let mut worst = 0.0f64;
    for row in &rows {
        let c = count_text(&row.text).map_err(|e| e.to_string())?;
        if (c.syllables, c.words, c.sentences) != (row.syllables, row.words, row.sentences) {
            return Err(format!("{}: counts {:?}", row.id, (c.syllables, c.words, c.sentences)));
        }
        let s = score_readability(&row.text, "es-ES").map_err(|e| e.to_string())?;
        worst = worst
            .max((s.fernandez_huerta - row.fernandez_huerta).abs())
            .max((s.szigriszt_pazos - row.szigriszt_pazos).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    check(
        rows.len() == 10 && worst < 1e-9 && elapsed < 1.0,
        format!("{} texts, max |error| {worst:.1e}, {elapsed:.4}s", rows.len()),
        || format!("{} texts, max |error| {worst:e}, {elapsed:.4}s", rows.len()),
    )
}

fn other_route(r: Route) -> Route {
    match r {
        Route::Oral => Route::Topical,
        Route::Topical => Route::Inhaled,
        Route::Inhaled => Route::Injection,
        Route::Injection => Route::Oral,
    }
}

fn replace_first(node: &mut UiNode, from: &str, to: &str) -> bool {
    if node.text.contains(from) {
        node.text = node.text.replacen(from, to, 1);
        return true;
    }
    node.children.iter_mut().any(|c| replace_first(c, from, to))
}

fn remove_node(node: &mut UiNode, id: &str) -> bool {
    let before = node.children.len();
    node.children.retain(|c| c.node_id != id);
    before != node.children.len() || node.children.iter_mut().any(|c| remove_node(c, id))
}

/// Apply one mutation to medication section `i`; `None` if it had no target.
fn mutate(art: &UiArtifact, i: usize, med: &MedicationRecord, field: FactField, k: usize) -> Option<UiArtifact> {
    let mut out = art.clone();
    let id = format!("n-root.med{i}");
    let sec = out.nodes[0].children.iter_mut().find(|n| n.node_id == id)?;
    let applied = match field {
        FactField::Dose => {
            let changed = MedicationRecord {
                dose_value: med.dose_value * 2.0,
                ..med.clone()
            };
            replace_first(sec, &dose_phrase(med), &dose_phrase(&changed))
        }
        FactField::Frequency => replace_first(
            sec,
            &frequency_phrase(med.frequency_per_day),
            &frequency_phrase(med.frequency_per_day + 1),
        ),
        FactField::Route => replace_first(sec, &route_phrase(med.route), &route_phrase(other_route(med.route))),
        FactField::Warning => remove_node(sec, &format!("n-root.med{i}.warn{k}")),
    };
    applied.then_some(out)
}

fn mutation_completeness() -> Outcome {
    let registry = catalog::illustrative_registry();
    let snap = registry.current();
    let (mut total, mut caught, mut clean, mut clean_ok) = (0, 0, 0, 0);
    let mut first_miss = None;
    for source in catalog::corpus_sources() {
        for pid in catalog::profile_ids() {
            let profile = snap.profile(&pid).map_err(|e| e.to_string())?.clone();
            let art = catalog::template_artifact(&snap, &source, &profile, 1).map_err(|e| e.to_string())?;
            clean += 1;
            if check_factual_consistency(&art, &source).map_err(|e| e.to_string())?.critical() == 0 {
                clean_ok += 1;
            }
            for (i, med) in source.medications.iter().enumerate() {
                let mut muts = vec![(FactField::Dose, 0), (FactField::Frequency, 0), (FactField::Route, 0)];
                muts.extend((0..med.warnings.len()).map(|k| (FactField::Warning, k)));
                for (field, k) in muts {
                    total += 1;
                    let Some(m) = mutate(&art, i, med, field, k) else {
                        first_miss.get_or_insert_with(|| format!("{} {pid} med{i} {field:?}: no target", source.id));
                        continue;
                    };
                    let report = check_factual_consistency(&m, &source).map_err(|e| e.to_string())?;
                    let crit: Vec<_> = report.findings.iter().filter(|f| f.severity == Severity::Critical).collect();
                    if crit.len() == 1 && crit[0].field == field {
                        caught += 1;
                    } else {
                        first_miss.get_or_insert_with(|| format!("{} {pid} med{i} {field:?}", source.id));
                    }
                }
            }
        }
    }
    check(
        total >= 100 && caught == total && clean_ok == clean,
        format!("{caught}/{total} mutations caught once, {clean_ok}/{clean} clean artifacts with zero critical"),
        || format!("{caught}/{total} caught, {clean_ok}/{clean} clean; first miss {first_miss:?}"),
    )
}

fn gate_event(i: usize, artifact: &str, role: ReviewerRole, decision: ReviewDecision) -> FeedbackEvent {
    FeedbackEvent {
        event_id: format!("fb-{i:06}"),
        artifact_id: artifact.into(),
        task_id: format!("task-{artifact}-{}", role.as_str()),
        reviewer_id: format!("rev-{}", role.as_str()),
        reviewer_role: role,
        timestamp: catalog::epoch(),
        decision,
        eou_rating: None,
        comment: "note".into(),
        requirement_ids: vec![catalog::ids::DOSE.into()],
        ui_node_ids: vec![],
        policy_version: 1,
        prev_event_hash: GENESIS_HASH.into(),
        event_hash: String::new(),
    }
}

fn release_gate_safety() -> Outcome {
    const ART: &str = "art-under-test";
    let mut alphabet = Vec::new();
    for artifact in [ART, "art-other"] {
        for role in ReviewerRole::ALL {
            for d in ReviewDecision::ALL {
                alphabet.push((artifact, role, d));
            }
        }
    }
    let mut seqs: Vec<Vec<FeedbackEvent>> = vec![Vec::new()];
    let mut frontier = seqs.clone();
    for _ in 0..3 {
        let mut next = Vec::new();
        for s in &frontier {
            for &(a, r, d) in &alphabet {
                let mut s = s.clone();
                s.push(gate_event(s.len() + 1, a, r, d));
                next.push(s);
            }
        }
        seqs.extend(next.iter().cloned());
        frontier = next;
    }
    let mut roles = vec![None];
    roles.extend(ReviewerRole::ALL.map(Some));
    let (mut checked, mut violations) = (0usize, 0usize);
    for status in [EscalationStatus::AutoReleased, EscalationStatus::Escalated, EscalationStatus::Blocked] {
        for &required_role in &roles {
            let d = EscalationDecision {
                artifact_id: ART.into(),
                policy_version: 1,
                status,
                triggers: vec![],
                required_role,
                decided_at: catalog::epoch(),
            };
            for events in &seqs {
                checked += 1;
                let released = release_gate(&d, events) == ReleaseState::Releasable;
                let approving = required_role.is_some_and(|role| {
                    events
                        .iter()
                        .find(|e| e.artifact_id == ART && e.reviewer_role == role)
                        .is_some_and(|e| e.decision == ReviewDecision::Approve && role.can_release())
                });
                let bad = match status {
                    EscalationStatus::Blocked => released,
                    EscalationStatus::Escalated => released != approving,
                    EscalationStatus::AutoReleased => !released,
                };
                violations += bad as usize;
            }
        }
    }
    check(
        violations == 0,
        format!("{checked} (decision, sequence) pairs over {} sequences, 0 violations", seqs.len()),
        || format!("{violations} violations out of {checked}"),
    )
}

/// Engine with the full corpus reviewed, 10 random governance actions and a
/// second wave of submissions, persisted into a fresh store.
fn governed_store(dir: &Path, seed: u64) -> Result<Engine, String> {
    let mut engine = Engine::illustrative();
    let t = engine_fixtures::submit_corpus(&mut engine, 0);
    let t = engine_fixtures::review_all(&mut engine, t);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = engine_fixtures::apply_random_actions(&mut engine, 5, &mut rng, t);
    let ids: Vec<String> = engine.sources().map(|s| s.id.clone()).collect();
    for sid in ids.iter().take(10) {
        engine.submit(sid, "p-general", engine_fixtures::at(t)).map_err(|e| e.to_string())?;
        t += 1;
    }
    engine_fixtures::apply_random_actions(&mut engine, 5, &mut rng, t);
    let store = Store::init(dir, &Genesis::illustrative()).map_err(|e| e.to_string())?;
    store.write_engine(&engine).map_err(|e| e.to_string())?;
    Ok(engine)
}

fn tamper_evidence(dir: &Path) -> Outcome {
    governed_store(dir, 0x7a3e)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut detected = 0;
    let mut trials = 0;
    for file in [FEEDBACK_LOG, GOVERNANCE_LOG] {
        let path = dir.join(file);
        let pristine = std::fs::read(&path).map_err(|e| e.to_string())?;
        for _ in 0..500 {
            trials += 1;
            let pos = rng.random_range(0..pristine.len());
            let mut bytes = pristine.clone();
            bytes[pos] ^= 1 << rng.random_range(0..8);
            std::fs::write(&path, &bytes).map_err(|e| e.to_string())?;
            let expected = bytes[..pos].iter().filter(|&&b| b == b'\n').count();
            let audit = Store::open(dir).verify();
            let report = if file == FEEDBACK_LOG { audit.feedback_chain } else { audit.governance_chain };
            if !report.valid && report.first_bad_index == Some(expected) {
                detected += 1;
            }
        }
        std::fs::write(&path, &pristine).map_err(|e| e.to_string())?;
    }
    let restored = Store::open(dir).verify().ok();
    check(
        detected == trials && trials == 1000 && restored,
        format!("{detected}/{trials} bit flips reported at the flipped line"),
        || format!("{detected}/{trials} detected; pristine store verifies: {restored}"),
    )
}

fn replay_determinism(root: &Path) -> Outcome {
    let mut summary = Vec::new();
    for seed in [1u64, 2, 3] {
        let dir = root.join(format!("replay-{seed}"));
        let original = governed_store(&dir, seed)?;
        let (loaded, _) = Store::open(&dir).load().map_err(|e| e.to_string())?;
        let actions = loaded.governance().actions().len();
        let mut exact = 0;
        let mut total = 0;
        for ev in loaded.evidence() {
            total += 1;
            let replayed = loaded.replay(&ev.artifact.artifact_id).map_err(|e| e.to_string())?;
            let stored = original.evidence_for(&ev.artifact.artifact_id).map_err(|e| e.to_string())?;
            let same_bytes =
                serde_json::to_vec(&replayed).map_err(|e| e.to_string())? == serde_json::to_vec(&stored.decision).map_err(|e| e.to_string())?;
            exact += (replayed == stored.decision && same_bytes) as usize;
        }
        if actions != 10 || total < 50 || exact != total {
            return Err(format!("seed {seed}: {actions} actions, {exact}/{total} exact"));
        }
        summary.push(format!("seed {seed}: {exact}/{total}"));
    }
    Ok(format!("10 actions per store, decisions replayed bit-exactly ({})", summary.join(", ")))
}

fn drift_latency_and_specificity() -> Outcome {
    let config = DriftConfig::default();
    let runs = 200u64;
    let mut worst = 0;
    let mut missed = 0;
    for seed in 0..runs {
        let r = simulate_drift(
            SimulationSpec {
                seed,
                windows: 100,
                base_rate: 0.1,
                shifted_rate: 0.4,
                change_at: Some(20),
            },
            config,
        );
        match r.detection_latency {
            Some(l) => worst = worst.max(l),
            None => missed += 1,
        }
    }
    let (mut runs_with_alert, mut alert_windows) = (0u64, 0usize);
    for seed in 0..runs {
        let r = simulate_drift(
            SimulationSpec {
                seed: 10_000 + seed,
                windows: 100,
                base_rate: 0.1,
                shifted_rate: 0.1,
                change_at: None,
            },
            config,
        );
        runs_with_alert += (r.false_alerts > 0) as u64;
        alert_windows += r.false_alerts;
    }
    let per_run = runs_with_alert as f64 / runs as f64;
    let per_window = alert_windows as f64 / (runs as f64 * 100.0);
    let detail = format!(
        "worst latency {worst} (limit 3, {missed} missed); stationary runs with any false alert {per_run:.3} (limit 0.01); \
         per-window false alert rate {per_window:.5}"
    );
    check(missed == 0 && worst <= 3 && per_run <= 0.01, detail.clone(), || detail)
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_oversight")
}

fn evaluate(store: &Path, out: &Path, profile: &str, artifact: Option<&str>) -> Result<(i32, Value, Value), String> {
    let source = fixture("paracetamol_source.json");
    let mut cmd = Command::new(bin());
    cmd.args(["evaluate", "--profile", profile, "--now", "2026-03-02T09:00:00Z"])
        .arg("--source")
        .arg(&source)
        .arg("--out")
        .arg(out)
        .arg("--store")
        .arg(store);
    if let Some(a) = artifact {
        cmd.arg("--artifact").arg(fixture(a));
    }
    let output = cmd.env("RUST_LOG", "error").output().map_err(|e| e.to_string())?;
    let report = std::fs::read(out)
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok())
        .unwrap_or(Value::Null);
    let stderr = serde_json::from_slice(&output.stderr).unwrap_or(Value::Null);
    Ok((output.status.code().unwrap_or(-1), report, stderr))
}

fn end_to_end_cli(store: &Path) -> Outcome {
    let out = store.with_extension("out");
    std::fs::create_dir_all(&out).map_err(|e| e.to_string())?;
    let (clean, report, _) = evaluate(store, &out.join("clean.json"), "p-general", None)?;
    let clean_ok = clean == 0 && report["escalation"]["triggers"] == serde_json::json!([]);
    let (mutated, report, _) = evaluate(
        store,
        &out.join("mutated.json"),
        "p-general",
        Some("paracetamol_dose_mutated_artifact.json"),
    )?;
    let contradiction = report["checkpoints"].as_array().into_iter().flatten().any(|c| {
        c["checkpoint"] == "F"
            && c["detail"]["findings"]
                .as_array()
                .is_some_and(|f| f.iter().any(|x| x["kind"] == "contradiction" && x["field"] == "dose"))
    });
    let mutated_ok = mutated == 2 && contradiction;
    let (unknown, _, err) = evaluate(store, &out.join("unknown.json"), "p-unknown", None)?;
    let unknown_ok = unknown == 1 && err["code"] == "UNKNOWN_PROFILE";
    for p in ["p-cognitive", "p-lowvision"] {
        evaluate(store, &out.join(format!("{p}.json")), p, None)?;
    }
    let detail = format!("clean exit {clean}, dose-mutated exit {mutated} (F contradiction: {contradiction}), unknown profile exit {unknown}");
    check(clean_ok && mutated_ok && unknown_ok, detail.clone(), || detail)
}

fn traceability(stores: &[PathBuf]) -> Outcome {
    let mut parts = Vec::new();
    for store in stores {
        let output = Command::new(bin())
            .arg("verify")
            .arg("--store")
            .arg(store)
            .output()
            .map_err(|e| e.to_string())?;
        let report: Value = serde_json::from_slice(&output.stdout).map_err(|e| e.to_string())?;
        let engine = &report["audit"]["engine"];
        let unresolved = engine["unresolved_requirements"].as_object().map_or(usize::MAX, |m| m.len());
        let dangling = engine["dangling_nodes"].as_object().map_or(usize::MAX, |m| m.len());
        let chains = report["audit"]["feedback_chain"]["valid"] == true && report["audit"]["governance_chain"]["valid"] == true;
        let code = output.status.code().unwrap_or(-1);
        let name = store.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if code != 0 || unresolved != 0 || dangling != 0 || !chains {
            return Err(format!("{name}: exit {code}, {unresolved} unresolved, {dangling} dangling, chains valid {chains}"));
        }
        parts.push(format!("{name} ({} artifacts)", engine["artifacts"]));
    }
    Ok(format!("verify exit 0, 0 unresolved ids, 0 dangling nodes, valid chains: {}", parts.join(", ")))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let root = tmp.path();
    let e2e = root.join("e2e-store");
    let mut criteria: Vec<(&str, Outcome)> = vec![
        ("readability oracle equivalence", readability_oracle()),
        ("mutation-detection completeness", mutation_completeness()),
        ("release-gate safety", release_gate_safety()),
        ("tamper evidence", tamper_evidence(&root.join("tamper"))),
        ("replay determinism", replay_determinism(root)),
        ("drift detection latency and specificity", drift_latency_and_specificity()),
    ];
    let cli = end_to_end_cli(&e2e);
    let stores = vec![e2e.clone(), root.join("replay-1"), root.join("replay-2"), root.join("replay-3")];
    criteria.push(("traceability integrity", traceability(&stores)));
    criteria.push(("end-to-end CLI contract", cli));
    let mut failed = 0;
    for (name, outcome) in &criteria {
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
