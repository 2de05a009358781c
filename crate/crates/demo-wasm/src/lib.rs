//! Browser bindings for the static demo page.
//!
//! Every export takes and returns JSON strings. Failures come back as
//! `{"error": "..."}` so the page never has to catch exceptions.

use oversight_core::catalog;
use oversight_core::checkpoints::readability::score_readability;
use oversight_core::supervision::{simulate_drift, DriftConfig, SimulationSpec};
use oversight_core::{Engine, PolicyConfig, UiArtifact};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;

fn respond<T: Serialize>(result: Result<T, String>) -> String {
    let value = match result.and_then(|v| serde_json::to_value(v).map_err(|e| e.to_string())) {
        Ok(v) => v,
        Err(e) => json!({ "error": e }),
    };
    value.to_string()
}

#[wasm_bindgen]
pub fn readability(text: &str, language: &str) -> String {
    respond(score_readability(text, language).map_err(|e| e.to_string()))
}

/// Corpus sources, profiles and the default policy used to fill the page.
#[wasm_bindgen]
pub fn catalog_json() -> String {
    respond(Ok(json!({
        "sources": catalog::corpus_sources(),
        "profiles": catalog::illustrative_profiles(),
        "policy": catalog::default_policy(),
    })))
}

/// The generated artifact for a source and profile, as a starting point for edits.
#[wasm_bindgen]
pub fn template_artifact(source_id: &str, profile_id: &str) -> String {
    respond(template(source_id, profile_id))
}

fn template(source_id: &str, profile_id: &str) -> Result<UiArtifact, String> {
    let registry = catalog::illustrative_registry();
    let snap = registry.current();
    let source = find_source(source_id)?;
    let profile = snap.profile(profile_id).map_err(|e| e.to_string())?.clone();
    catalog::template_artifact(&snap, &source, &profile, 1).map_err(|e| e.to_string())
}

fn find_source(id: &str) -> Result<oversight_core::SourceDocument, String> {
    catalog::corpus_sources()
        .into_iter()
        .find(|s| s.id == id)
        .ok_or_else(|| format!("unknown source {id}"))
}

#[derive(Debug, Deserialize)]
struct ExploreRequest {
    source_id: String,
    profile_id: String,
    #[serde(default)]
    artifact: Option<UiArtifact>,
    #[serde(default)]
    policy: Option<PolicyConfig>,
}

/// Run the checkpoints and escalation policy on one artifact.
///
/// Without `artifact` the template artifact is evaluated. `policy` replaces
/// the default thresholds and routing.
#[wasm_bindgen]
pub fn explore_escalation(request: &str) -> String {
    respond(explore(request))
}

fn explore(request: &str) -> Result<Value, String> {
    let req: ExploreRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let mut surface = catalog::default_surface();
    if let Some(policy) = req.policy {
        surface.policy = policy;
    }
    let mut engine = Engine::new(surface, catalog::illustrative_registry()).map_err(|e| e.to_string())?;
    engine.register_source(find_source(&req.source_id)?).map_err(|e| e.to_string())?;
    let now = catalog::epoch();
    let submission = match req.artifact {
        Some(artifact) => engine.submit_artifact(artifact, now),
        None => engine.submit(&req.source_id, &req.profile_id, now),
    }
    .map_err(|e| e.to_string())?;
    let ev = submission.evidence;
    Ok(json!({
        "artifact_id": ev.artifact.artifact_id,
        "checkpoints": ev.results,
        "safety_nodes": ev.safety_nodes,
        "decision": ev.decision,
        "required_role": submission.task.map(|t| t.required_role),
    }))
}

#[derive(Debug, Deserialize)]
struct DriftRequest {
    spec: SimulationSpec,
    #[serde(default)]
    config: Option<DriftConfig>,
}

/// Seeded escalation-rate simulation with per-window rates and alerts.
#[wasm_bindgen]
pub fn simulate(request: &str) -> String {
    respond(drift(request))
}

fn drift(request: &str) -> Result<Value, String> {
    let req: DriftRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let report = simulate_drift(req.spec, req.config.unwrap_or_default());
    let rates: Vec<f64> = report.windows.iter().map(|w| w.escalation_rate).collect();
    Ok(json!({
        "baseline_windows": report.config.baseline_windows,
        "rates": rates,
        "alerting_windows": report.alerting_windows,
        "detection_latency": report.detection_latency,
        "false_alerts": report.false_alerts,
        "alerts": report.alerts,
    }))
}
