#![allow(dead_code)]

use chrono::Duration;
use oversight_core::catalog;
use oversight_core::review::{DecisionInput, ReviewDecision};
use oversight_core::{Engine, Timestamp};

pub fn at(minutes: i64) -> Timestamp {
    catalog::epoch() + Duration::minutes(minutes)
}

/// Submit the whole corpus for every profile. Returns the next free minute.
pub fn submit_corpus(engine: &mut Engine, start: i64) -> i64 {
    let mut t = start;
    for source in catalog::corpus_sources() {
        engine.register_source(source).unwrap();
    }
    let ids: Vec<String> = engine.sources().map(|s| s.id.clone()).collect();
    for sid in &ids {
        for pid in catalog::profile_ids() {
            engine.submit(sid, &pid, at(t)).unwrap();
            t += 1;
        }
    }
    t
}

/// Resolve every open task, cycling approve, reject and request_revision.
pub fn review_all(engine: &mut Engine, start: i64) -> i64 {
    let mut t = start;
    let tasks: Vec<_> = engine.queue().open_tasks(None).into_iter().cloned().collect();
    for (i, task) in tasks.iter().enumerate() {
        let decision = ReviewDecision::ALL[i % 3];
        let reqs: Vec<String> = task.triggers.iter().flat_map(|t| t.requirement_ids.clone()).collect();
        let nodes: Vec<String> = task.triggers.iter().flat_map(|t| t.ui_node_ids.clone()).collect();
        let mut reqs = reqs;
        reqs.dedup();
        let reviewer = format!("rev-{}", task.required_role.as_str());
        engine.claim(&task.task_id, &reviewer, task.required_role).unwrap();
        engine
            .submit_decision(
                DecisionInput {
                    task_id: task.task_id.clone(),
                    reviewer_id: reviewer,
                    reviewer_role: task.required_role,
                    decision,
                    eou_rating: Some((i % 5 + 1) as i64),
                    comment: format!("review note {i}"),
                    requirement_ids: if reqs.is_empty() { vec![catalog::ids::READABILITY.into()] } else { reqs },
                    ui_node_ids: nodes.into_iter().take(2).collect(),
                },
                at(t),
            )
            .unwrap();
        t += 1;
    }
    t
}

pub fn populated() -> Engine {
    let mut engine = Engine::illustrative();
    let t = submit_corpus(&mut engine, 0);
    review_all(&mut engine, t);
    engine
}

use oversight_core::checkpoints::safety::{LexiconEntry, MatchMode};
use oversight_core::governance::{ActionKind, ActionRequest};
use oversight_core::ReviewerRole;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::{json, Value};

/// A valid, non-trivial change of the given kind against the current state.
pub fn random_request(engine: &Engine, kind: ActionKind, rng: &mut impl Rng, justification: &str) -> ActionRequest {
    let surface = engine.surface();
    let registry = engine.registry();
    let (target, after): (String, Value) = match kind {
        ActionKind::ThresholdUpdate => {
            let entry = surface.policy.thresholds.choose(rng).unwrap();
            let mut next = *entry;
            let step = match entry.checkpoint.as_str() {
                "R" => rng.random_range(1..=8) as f64,
                "H" => 1.0,
                _ => rng.random_range(1..=4) as f64 / 100.0,
            };
            next.threshold = if rng.random_bool(0.5) { entry.threshold + step } else { entry.threshold - step };
            (
                format!("{}/{}", entry.checkpoint.as_str(), entry.need.as_str()),
                serde_json::to_value(next).unwrap(),
            )
        }
        ActionKind::RuleUpdate => {
            let ids: Vec<&String> = registry.rules.keys().collect();
            let id = (*ids.choose(rng).unwrap()).clone();
            let mut rule = registry.rules[&id].clone();
            rule.version += 1;
            rule.priority += rng.random_range(1..=3);
            (id, serde_json::to_value(rule).unwrap())
        }
        ActionKind::PromptTemplateUpdate => {
            let tpl = surface.prompt_templates.values().next().unwrap();
            let text = format!("{} Variante {}.", tpl.text, rng.random_range(0..1_000_000));
            (tpl.id.clone(), json!({"id": tpl.id, "version": tpl.version, "text": text}))
        }
        ActionKind::RequirementRefinement => {
            let ids: Vec<&String> = registry.requirements.keys().collect();
            let id = (*ids.choose(rng).unwrap()).clone();
            let mut rec = registry.requirements[&id].clone();
            rec.description = format!("{} (revisado {})", rec.description, rng.random_range(0..1_000_000));
            (id, serde_json::to_value(rec).unwrap())
        }
        ActionKind::LexiconUpdate => {
            let mut entries = surface.lexicon.entries.clone();
            entries.push(LexiconEntry {
                term: format!("término{}", rng.random_range(0..1_000_000)),
                mode: if rng.random_bool(0.5) { MatchMode::Word } else { MatchMode::Substring },
            });
            ("lexicon".into(), serde_json::to_value(entries).unwrap())
        }
        ActionKind::DriftConfigUpdate => {
            let mut drift = surface.drift;
            drift.z_threshold += rng.random_range(1..=5) as f64 / 10.0;
            ("drift".into(), serde_json::to_value(drift).unwrap())
        }
    };
    ActionRequest {
        kind,
        target_id: target,
        after,
        justification_event_ids: vec![justification.to_string()],
        actor: "owner-1".into(),
        actor_role: ReviewerRole::SystemOwner,
    }
}

/// Apply `n` random actions, each justified by an existing feedback event.
pub fn apply_random_actions(engine: &mut Engine, n: usize, rng: &mut impl Rng, start: i64) -> i64 {
    let event_ids: Vec<String> = engine.log().events().iter().map(|e| e.event_id.clone()).collect();
    assert!(!event_ids.is_empty(), "actions need a feedback event to cite");
    let mut t = start;
    for _ in 0..n {
        let kind = *ActionKind::ALL.choose(rng).unwrap();
        let justification = event_ids.choose(rng).unwrap().clone();
        let req = random_request(engine, kind, rng, &justification);
        engine.apply_governance(req, at(t)).unwrap();
        t += 1;
    }
    t
}
