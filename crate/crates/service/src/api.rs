//! HTTP API.
//!
//! All state lives behind one mutex: decisions and log appends are applied
//! one at a time and every change is on disk before the response is sent.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, Request, State};
use axum::http::{HeaderMap, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use oversight_core::digest::sha256_hex;
use oversight_core::engine::{Engine, Submission};
use oversight_core::generation::GeneratorPort;
use oversight_core::governance::{ActionKind, ActionRequest};
use oversight_core::review::{DecisionInput, ReviewDecision};
use oversight_core::{ReviewerRole, SourceDocument, Timestamp, UiArtifact};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::ApiError;
use crate::store::{IdempotencyRecord, Store, StoreError};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

/// Authenticated caller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Principal {
    pub id: String,
    pub role: ReviewerRole,
}

/// Static bearer tokens, one principal each.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tokens(pub BTreeMap<String, Principal>);

impl Tokens {
    /// One token per role, `"<role>-token"`, for local use and tests.
    pub fn development() -> Self {
        Tokens(
            ReviewerRole::ALL
                .into_iter()
                .map(|r| {
                    (
                        format!("{}-token", r.as_str()),
                        Principal {
                            id: format!("{}-1", r.as_str()),
                            role: r,
                        },
                    )
                })
                .collect(),
        )
    }

    pub fn resolve(&self, headers: &HeaderMap) -> Result<Principal, ApiError> {
        let value = headers
            .get(axum::http::header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .ok_or_else(ApiError::unauthorized)?;
        let token = value.strip_prefix("Bearer ").ok_or_else(ApiError::unauthorized)?;
        self.0.get(token.trim()).cloned().ok_or_else(ApiError::unauthorized)
    }
}

pub type Clock = Arc<dyn Fn() -> Timestamp + Send + Sync>;

/// Hook applied to every engine loaded from the store, for example to
/// attach remote scorers.
pub type EngineHook = Arc<dyn Fn(Engine) -> Engine + Send + Sync>;

pub struct Service {
    pub engine: Engine,
    pub store: Store,
    idempotency: BTreeMap<String, IdempotencyRecord>,
    hook: Option<EngineHook>,
    generator: Option<Arc<dyn GeneratorPort + Send + Sync>>,
}

impl Service {
    /// Load the store. Compliance snapshots are rewritten from the loaded
    /// state, covering a crash between a log append and its snapshot write.
    pub fn open(store: Store, hook: Option<EngineHook>) -> Result<Self, StoreError> {
        let mut engine = store.load_strict()?;
        if let Some(h) = &hook {
            engine = h(engine);
        }
        let ids: Vec<String> = engine.evidence().map(|e| e.artifact.artifact_id.clone()).collect();
        for id in ids {
            store.put_compliance(&engine.compliance_report(&id)?)?;
        }
        let idempotency = store
            .idempotency_records()?
            .into_iter()
            .map(|r| (scope(&r.principal, &r.key), r))
            .collect();
        Ok(Service {
            engine,
            store,
            idempotency,
            hook,
            generator: None,
        })
    }

    pub fn with_generator(mut self, port: Arc<dyn GeneratorPort + Send + Sync>) -> Self {
        self.generator = Some(port);
        self
    }

    /// Drop in-memory changes that failed to persist.
    fn reload(&mut self) {
        match self.store.load_strict() {
            Ok(engine) => {
                self.engine = match &self.hook {
                    Some(h) => h(engine),
                    None => engine,
                }
            }
            Err(e) => tracing::error!(error = %e, "reload after failed write"),
        }
    }

    fn persist(&mut self, write: impl FnOnce(&Store, &Engine) -> Result<(), StoreError>) -> Result<(), ApiError> {
        match write(&self.store, &self.engine) {
            Ok(()) => Ok(()),
            Err(e) => {
                tracing::error!(error = %e, "store write failed");
                self.reload();
                Err(e.into())
            }
        }
    }
}

fn scope(principal: &str, key: &str) -> String {
    format!("{principal}\u{1f}{key}")
}

#[derive(Clone)]
pub struct AppState {
    service: Arc<Mutex<Service>>,
    tokens: Arc<Tokens>,
    clock: Clock,
}

impl AppState {
    pub fn new(service: Service, tokens: Tokens) -> Self {
        AppState {
            service: Arc::new(Mutex::new(service)),
            tokens: Arc::new(tokens),
            clock: Arc::new(Utc::now),
        }
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn lock(&self) -> MutexGuard<'_, Service> {
        self.service.lock().unwrap_or_else(|p| p.into_inner())
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/artifacts", post(submit_artifact))
        .route("/artifacts/{id}/compliance", get(compliance))
        .route("/artifacts/{id}/revise", post(revise))
        .route("/reviews/queue", get(queue))
        .route("/reviews/{task_id}/claim", post(claim))
        .route("/reviews/{task_id}/decision", post(decision))
        .route("/monitor/summary", get(summary))
        .route("/monitor/alerts", get(alerts))
        .route("/governance/actions", get(governance_actions).post(governance_action))
        .route("/governance/policy/{version}", get(policy))
        .route("/audit/verify", get(audit))
        .fallback(|| async { ApiError::new("NOT_FOUND", "no such endpoint") })
        .layer(middleware::from_fn(request_log))
        .with_state(state)
}

async fn request_log(req: Request, next: Next) -> Response {
    let (method, path) = (req.method().clone(), req.uri().path().to_string());
    let started = Instant::now();
    let response = next.run(req).await;
    tracing::info!(
        %method,
        %path,
        status = response.status().as_u16(),
        elapsed_ms = started.elapsed().as_millis() as u64,
        "request"
    );
    response
}

type Reply = Result<(StatusCode, Value), ApiError>;

fn respond(reply: Reply) -> Response {
    match reply {
        Ok((status, body)) => (status, Json(body)).into_response(),
        Err(e) => e.into_response(),
    }
}

fn parse<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

/// Run a mutation with idempotency-key handling. A repeated key with the
/// same request replays the stored response; with a different request it
/// is refused.
fn mutate(
    state: &AppState,
    headers: &HeaderMap,
    method: Method,
    path: String,
    body: Bytes,
    f: impl FnOnce(&mut Service, &Principal, Timestamp) -> Reply,
) -> Response {
    let principal = match state.tokens.resolve(headers) {
        Ok(p) => p,
        Err(e) => return e.into_response(),
    };
    let key = headers
        .get(IDEMPOTENCY_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    let mut svc = state.lock();
    let request_hash = sha256_hex(&[format!("{method} {path}\n").as_bytes(), &body[..]].concat());
    if let Some(key) = &key {
        if let Some(rec) = svc.idempotency.get(&scope(&principal.id, key)) {
            if rec.request_hash != request_hash {
                return ApiError::new("IDEMPOTENCY_KEY_REUSED", "idempotency key was used for a different request")
                    .into_response();
            }
            let status = StatusCode::from_u16(rec.status).unwrap_or(StatusCode::OK);
            return (status, Json(rec.body.clone())).into_response();
        }
    }
    let now = (state.clock)();
    let reply = f(&mut svc, &principal, now);
    let (status, body) = match reply {
        Ok((s, b)) => (s, b),
        Err(e) => (e.status(), serde_json::to_value(&e).expect("error serializes")),
    };
    if let Some(key) = key {
        if !status.is_server_error() {
            let rec = IdempotencyRecord {
                key: key.clone(),
                principal: principal.id.clone(),
                method: method.to_string(),
                path,
                request_hash,
                status: status.as_u16(),
                body: body.clone(),
            };
            if let Err(e) = svc.store.append_idempotency(&rec) {
                tracing::error!(error = %e, "idempotency record not persisted");
            } else {
                svc.idempotency.insert(scope(&principal.id, &key), rec);
            }
        }
    }
    (status, Json(body)).into_response()
}

fn read<T>(state: &AppState, headers: &HeaderMap, f: impl FnOnce(&Service, &Principal) -> Result<T, ApiError>) -> Response
where
    T: Serialize,
{
    let reply = state
        .tokens
        .resolve(headers)
        .and_then(|p| f(&state.lock(), &p))
        .map(|v| (StatusCode::OK, serde_json::to_value(v).expect("response serializes")));
    respond(reply)
}

async fn healthz(State(state): State<AppState>) -> Json<Value> {
    let svc = state.lock();
    Json(json!({ "status": "ok", "policy_version": svc.engine.policy_version() }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmitBody {
    #[serde(default)]
    source: Option<SourceDocument>,
    #[serde(default)]
    source_id: Option<String>,
    #[serde(default)]
    profile_id: Option<String>,
    /// A pre-built artifact to evaluate instead of generating one.
    #[serde(default)]
    artifact: Option<UiArtifact>,
    /// Generate through the configured external generator.
    #[serde(default)]
    external: bool,
}

fn submission_body(svc: &Service, sub: &Submission) -> Result<Value, ApiError> {
    let id = &sub.evidence.artifact.artifact_id;
    Ok(json!({
        "artifact": sub.evidence.artifact,
        "decision": sub.evidence.decision,
        "checkpoints": sub.evidence.results,
        "safety_nodes": sub.evidence.safety_nodes,
        "task": sub.task,
        "created": sub.created,
        "release": svc.engine.release_state(id)?,
        "compliance": svc.engine.compliance_report(id)?,
    }))
}

fn record_submission(svc: &mut Service, sub: &Submission, source: Option<&SourceDocument>) -> Result<(), ApiError> {
    let evidence = sub.evidence.clone();
    let created = sub.created;
    let source = source.cloned();
    svc.persist(|store, engine| {
        if let Some(s) = &source {
            store.put_source(s)?;
        }
        if created {
            store.put_evidence(&evidence)?;
        }
        store.put_compliance(&engine.compliance_report(&evidence.artifact.artifact_id)?)
    })
}

async fn submit_artifact(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Response {
    let path = "/artifacts".to_string();
    mutate(&state, &headers, Method::POST, path, body.clone(), |svc, _p, now| {
        let req: SubmitBody = parse(&body)?;
        let mut new_source = None;
        let given_id = req.source.as_ref().map(|s| s.id.clone());
        if let Some(source) = req.source {
            let known = svc.engine.source(&source.id).is_ok();
            svc.engine.register_source(source.clone())?;
            if !known {
                new_source = Some(source);
            }
        }
        let sub = if let Some(artifact) = req.artifact {
            svc.engine.submit_artifact(artifact, now)
        } else {
            let source_id = req
                .source_id
                .or(given_id)
                .ok_or_else(|| ApiError::bad_request("source_id or source is required"))?;
            let profile_id = req.profile_id.ok_or_else(|| ApiError::bad_request("profile_id is required"))?;
            if req.external {
                let port = svc
                    .generator
                    .clone()
                    .ok_or_else(|| ApiError::new("GENERATOR_UNAVAILABLE", "no external generator configured"))?;
                svc.engine.submit_external(&source_id, &profile_id, port.as_ref(), None, now)
            } else {
                svc.engine.submit(&source_id, &profile_id, now)
            }
        };
        let sub = match sub {
            Ok(s) => s,
            Err(e) => {
                if new_source.is_some() {
                    // Keep the registered source only once it is on disk.
                    svc.persist(|store, _| store.put_source(new_source.as_ref().expect("checked")))?;
                }
                return Err(e.into());
            }
        };
        record_submission(svc, &sub, new_source.as_ref())?;
        let status = if sub.created { StatusCode::CREATED } else { StatusCode::OK };
        Ok((status, submission_body(svc, &sub)?))
    })
}

async fn revise(State(state): State<AppState>, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> Response {
    let path = format!("/artifacts/{id}/revise");
    mutate(&state, &headers, Method::POST, path, body, |svc, _p, now| {
        let sub = svc.engine.revise(&id, now)?;
        record_submission(svc, &sub, None)?;
        let status = if sub.created { StatusCode::CREATED } else { StatusCode::OK };
        Ok((status, submission_body(svc, &sub)?))
    })
}

async fn compliance(State(state): State<AppState>, headers: HeaderMap, Path(id): Path<String>) -> Response {
    read(&state, &headers, |svc, _| Ok(svc.engine.compliance_report(&id)?))
}

type Params = BTreeMap<String, String>;

fn params(q: Result<Query<Params>, QueryRejection>) -> Result<Params, ApiError> {
    q.map(|Query(p)| p).map_err(|e| ApiError::bad_request(e.body_text()))
}

async fn queue(State(state): State<AppState>, headers: HeaderMap, q: Result<Query<Params>, QueryRejection>) -> Response {
    read(&state, &headers, |svc, p| {
        let q = params(q)?;
        let role = match q.get("role").map(String::as_str) {
            None | Some("") => p.role,
            Some(r) => ReviewerRole::parse(r).ok_or_else(|| ApiError::bad_request(format!("unknown role {r}")))?,
        };
        let mut tasks: Vec<_> = svc.engine.queue().open_tasks(Some(role)).into_iter().cloned().collect();
        tasks.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.task_id.cmp(&b.task_id)));
        let items: Vec<Value> = tasks
            .iter()
            .map(|t| {
                let ev = svc.engine.evidence_for(&t.artifact_id).ok();
                json!({
                    "task": t,
                    "artifact": ev.map(|e| &e.artifact),
                    "checkpoints": ev.map(|e| &e.results),
                    "source": ev.and_then(|e| svc.engine.source(&e.artifact.source_id).ok()),
                })
            })
            .collect();
        Ok(json!({ "role": role, "tasks": items }))
    })
}

async fn claim(State(state): State<AppState>, headers: HeaderMap, Path(task_id): Path<String>, body: Bytes) -> Response {
    let path = format!("/reviews/{task_id}/claim");
    mutate(&state, &headers, Method::POST, path, body, |svc, p, _now| {
        let task = svc.engine.claim(&task_id, &p.id, p.role)?;
        Ok((StatusCode::OK, json!({ "task": task })))
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionBody {
    decision: ReviewDecision,
    #[serde(default)]
    eou_rating: Option<i64>,
    #[serde(default)]
    comment: String,
    #[serde(default)]
    requirement_ids: Vec<String>,
    #[serde(default)]
    ui_node_ids: Vec<String>,
}

async fn decision(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(task_id): Path<String>,
    body: Bytes,
) -> Response {
    let path = format!("/reviews/{task_id}/decision");
    mutate(&state, &headers, Method::POST, path, body.clone(), |svc, p, now| {
        let req: DecisionBody = parse(&body)?;
        let outcome = svc.engine.submit_decision(
            DecisionInput {
                task_id: task_id.clone(),
                reviewer_id: p.id.clone(),
                reviewer_role: p.role,
                decision: req.decision,
                eou_rating: req.eou_rating,
                comment: req.comment,
                requirement_ids: req.requirement_ids,
                ui_node_ids: req.ui_node_ids,
            },
            now,
        )?;
        let event = outcome.event.clone();
        svc.persist(|store, engine| {
            store.append_feedback(&event)?;
            store.put_compliance(&engine.compliance_report(&event.artifact_id)?)
        })?;
        Ok((StatusCode::OK, serde_json::to_value(&outcome).expect("outcome serializes")))
    })
}

fn time_param(q: &Params, name: &str) -> Result<Option<Timestamp>, ApiError> {
    match q.get(name).filter(|v| !v.is_empty()) {
        None => Ok(None),
        Some(v) => chrono::DateTime::parse_from_rfc3339(v)
            .map(|t| Some(t.with_timezone(&Utc)))
            .map_err(|e| ApiError::bad_request(format!("{name}: {e}"))),
    }
}

async fn summary(State(state): State<AppState>, headers: HeaderMap, q: Result<Query<Params>, QueryRejection>) -> Response {
    read(&state, &headers, |svc, _| {
        let q = params(q)?;
        let (from, to) = (time_param(&q, "from")?, time_param(&q, "to")?);
        Ok(svc.engine.monitoring_summary(from, to))
    })
}

async fn alerts(State(state): State<AppState>, headers: HeaderMap) -> Response {
    read(&state, &headers, |svc, _| Ok(svc.engine.alerts()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionBody {
    kind: ActionKind,
    target_id: String,
    after: Value,
    justification_event_ids: Vec<String>,
}

async fn governance_action(State(state): State<AppState>, headers: HeaderMap, body: Bytes) -> Response {
    let path = "/governance/actions".to_string();
    mutate(&state, &headers, Method::POST, path, body.clone(), |svc, p, now| {
        let req: ActionBody = parse(&body)?;
        let action = svc.engine.apply_governance(
            ActionRequest {
                kind: req.kind,
                target_id: req.target_id,
                after: req.after,
                justification_event_ids: req.justification_event_ids,
                actor: p.id.clone(),
                actor_role: p.role,
            },
            now,
        )?;
        svc.persist(|store, _| store.append_governance(&action))?;
        Ok((StatusCode::CREATED, serde_json::to_value(&action).expect("action serializes")))
    })
}

async fn governance_actions(State(state): State<AppState>, headers: HeaderMap) -> Response {
    read(&state, &headers, |svc, _| Ok(svc.engine.governance().actions().to_vec()))
}

async fn policy(State(state): State<AppState>, headers: HeaderMap, Path(version): Path<String>) -> Response {
    read(&state, &headers, |svc, _| {
        let version: u64 = version
            .parse()
            .map_err(|_| ApiError::bad_request(format!("policy version {version} is not a number")))?;
        svc.engine
            .governance()
            .at(version)
            .cloned()
            .map_err(|e| ApiError::from(oversight_core::engine::EngineError::from(e)))
    })
}

async fn audit(State(state): State<AppState>, headers: HeaderMap) -> Response {
    read(&state, &headers, |svc, _| {
        let audit = svc.store.verify();
        Ok(json!({ "ok": audit.ok(), "audit": audit }))
    })
}
