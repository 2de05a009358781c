#![allow(dead_code)]

use std::path::Path;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use oversight_core::catalog;
use oversight_service::api::{router, AppState, Service, Tokens};
use oversight_service::store::{Genesis, Store};
use serde_json::{json, Value};
use tower::ServiceExt;

pub const DOMAIN: &str = "domain_expert-token";
pub const ACCESS: &str = "accessibility_specialist-token";
pub const PANEL: &str = "end_user_panel-token";
pub const OWNER: &str = "system_owner-token";

/// Second domain expert, for races between two reviewers of one role.
pub const DOMAIN_2: &str = "domain-2-token";

pub fn tokens() -> Tokens {
    let mut t = Tokens::development();
    let mut p = t.0[DOMAIN].clone();
    p.id = "domain_expert-2".into();
    t.0.insert(DOMAIN_2.into(), p);
    t
}

/// Clock advancing one minute per reading.
pub fn ticking_clock() -> oversight_service::api::Clock {
    let n = Arc::new(AtomicI64::new(0));
    Arc::new(move || catalog::epoch() + chrono::Duration::minutes(n.fetch_add(1, Ordering::SeqCst)))
}

pub fn open(root: &Path) -> (Router, AppState) {
    let store = Store::init(root, &Genesis::illustrative()).unwrap();
    let service = Service::open(store, None).unwrap();
    let state = AppState::new(service, tokens()).with_clock(ticking_clock());
    (router(state.clone()), state)
}

pub struct Reply {
    pub status: StatusCode,
    pub body: Value,
}

pub async fn call(app: &Router, method: &str, uri: &str, token: Option<&str>, key: Option<&str>, body: Option<Value>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    if let Some(k) = key {
        req = req.header("idempotency-key", k);
    }
    let body = match body {
        Some(v) => Body::from(serde_json::to_vec(&v).unwrap()),
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.header("content-type", "application/json").body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    Reply { status, body }
}

pub async fn get(app: &Router, uri: &str, token: &str) -> Reply {
    call(app, "GET", uri, Some(token), None, None).await
}

pub async fn post(app: &Router, uri: &str, token: &str, body: Value) -> Reply {
    call(app, "POST", uri, Some(token), None, Some(body)).await
}

pub async fn submit(app: &Router, source: &str, profile: &str) -> Reply {
    post(app, "/artifacts", PANEL, json!({ "source_id": source, "profile_id": profile })).await
}

/// Register the corpus by submitting each source document once.
pub async fn register_corpus(app: &Router) {
    for s in catalog::corpus_sources() {
        let r = post(app, "/artifacts", PANEL, json!({ "source": s, "profile_id": "p-general" })).await;
        assert!(r.status.is_success(), "{}", r.body);
    }
}

/// A decision body citing the task's triggers.
pub fn decision_body(task: &Value, decision: &str, rating: Option<u8>) -> Value {
    let mut reqs: Vec<Value> = Vec::new();
    let mut nodes: Vec<Value> = Vec::new();
    for t in task["triggers"].as_array().unwrap() {
        for r in t["requirement_ids"].as_array().unwrap() {
            if !reqs.contains(r) {
                reqs.push(r.clone());
            }
        }
        for n in t["ui_node_ids"].as_array().unwrap() {
            if !nodes.contains(n) {
                nodes.push(n.clone());
            }
        }
    }
    json!({
        "decision": decision,
        "eou_rating": rating,
        "comment": "checked against the leaflet",
        "requirement_ids": reqs,
        "ui_node_ids": nodes,
    })
}

pub fn token_for(role: &str) -> &'static str {
    match role {
        "domain_expert" => DOMAIN,
        "accessibility_specialist" => ACCESS,
        "end_user_panel" => PANEL,
        _ => OWNER,
    }
}

/// Corpus over every profile, every open task decided (cycling approve,
/// reject, request_revision) and one governance action. Returns the number
/// of feedback events.
pub async fn populate(app: &Router) -> usize {
    register_corpus(app).await;
    for s in catalog::corpus_sources() {
        for p in catalog::profile_ids() {
            let r = submit(app, &s.id, &p).await;
            assert!(r.status.is_success(), "{}", r.body);
        }
    }
    let decisions = ["approve", "reject", "request_revision"];
    let mut events = 0;
    let mut last_event = String::new();
    for role in ["domain_expert", "accessibility_specialist", "end_user_panel", "system_owner"] {
        let q = get(app, &format!("/reviews/queue?role={role}"), OWNER).await;
        for item in q.body["tasks"].as_array().unwrap() {
            let task = &item["task"];
            let tid = task["task_id"].as_str().unwrap();
            let d = decisions[events % 3];
            let rating = Some((events % 5 + 1) as u8);
            let r = post(app, &format!("/reviews/{tid}/decision"), token_for(role), decision_body(task, d, rating)).await;
            assert_eq!(r.status, 200, "{}", r.body);
            last_event = r.body["event"]["event_id"].as_str().unwrap().to_string();
            events += 1;
        }
    }
    assert!(events > 0);
    let g = post(
        app,
        "/governance/actions",
        OWNER,
        json!({
            "kind": "threshold_update",
            "target_id": "S/none",
            "after": { "checkpoint": "S", "need": "none", "threshold": 0.7, "comparator": ">=" },
            "justification_event_ids": [last_event],
        }),
    )
    .await;
    assert_eq!(g.status, 201, "{}", g.body);
    let r = submit(app, "src-loratadina", "p-general").await;
    assert!(r.status.is_success());
    events
}

/// Flip one bit of the byte at `offset` in `path`.
pub fn flip_bit(path: &Path, offset: usize, bit: u8) {
    let mut bytes = std::fs::read(path).unwrap();
    bytes[offset] ^= 1 << bit;
    std::fs::write(path, bytes).unwrap();
}

/// Byte offset of the middle of line `index`.
pub fn middle_of_line(path: &Path, index: usize) -> usize {
    let text = std::fs::read(path).unwrap();
    let mut start = 0;
    for (i, line) in text.split(|&b| b == b'\n').enumerate() {
        if i == index {
            return start + line.len() / 2;
        }
        start += line.len() + 1;
    }
    panic!("line {index} missing");
}
