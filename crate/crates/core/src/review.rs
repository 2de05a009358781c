//! HITL review: task queue, decision capture with the H checkpoint, and the
//! hash-chained feedback log.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::ids;
use crate::checkpoints::{Checkpoint, CheckpointDetail, CheckpointResult};
use crate::digest::{to_jsonl, verify_chain, verify_jsonl, ChainReport, Chained, GENESIS_HASH};
use crate::escalation::{EscalationDecision, EscalationStatus, PolicyConfig, ReviewerRole, Trigger};
use crate::generation::UiArtifact;
use crate::trace::{RegistrySnapshot, UserProfile};
use crate::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewDecision {
    Approve,
    Reject,
    RequestRevision,
}

impl ReviewDecision {
    pub const ALL: [ReviewDecision; 3] = [
        ReviewDecision::Approve,
        ReviewDecision::Reject,
        ReviewDecision::RequestRevision,
    ];

    pub fn needs_rationale(self) -> bool {
        !matches!(self, ReviewDecision::Approve)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskState {
    Open,
    Claimed,
    Resolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewTask {
    pub task_id: String,
    pub artifact_id: String,
    pub required_role: ReviewerRole,
    pub triggers: Vec<Trigger>,
    pub state: TaskState,
    pub created_at: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claimed_by: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReviewError {
    #[error("decision for {0} is not escalated")]
    NotEscalated(String),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("task requires role {required}, reviewer has {actual}")]
    RoleMismatch { required: String, actual: String },
    #[error("rating {0} outside 1..=5")]
    RatingOutOfRange(i64),
    #[error("{0} requires a rationale")]
    MissingRationale(String),
    #[error("task {0} is already resolved")]
    StaleTask(String),
    #[error("task {task_id} is claimed by {holder}")]
    ClaimConflict { task_id: String, holder: String },
    #[error("no requirement ids cited")]
    MissingRequirement,
    #[error("unresolved requirement ids: {0:?}")]
    UnresolvedRequirement(Vec<String>),
    #[error("unknown ui node ids: {0:?}")]
    UnknownNode(Vec<String>),
}

fn task_id(artifact_id: &str, role: ReviewerRole) -> String {
    format!("task-{artifact_id}-{}", role.as_str())
}

/// Review queue. At most one task exists per (artifact, role).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReviewQueue {
    pub tasks: BTreeMap<String, ReviewTask>,
}

impl ReviewQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn enqueue(&mut self, decision: &EscalationDecision, now: Timestamp) -> Result<ReviewTask, ReviewError> {
        let role = match (decision.status, decision.required_role) {
            (EscalationStatus::Escalated, Some(role)) if !decision.triggers.is_empty() => role,
            _ => return Err(ReviewError::NotEscalated(decision.artifact_id.clone())),
        };
        let id = task_id(&decision.artifact_id, role);
        let task = self.tasks.entry(id.clone()).or_insert_with(|| ReviewTask {
            task_id: id,
            artifact_id: decision.artifact_id.clone(),
            required_role: role,
            triggers: decision.triggers.clone(),
            state: TaskState::Open,
            created_at: now,
            claimed_by: None,
        });
        Ok(task.clone())
    }

    pub fn get(&self, task_id: &str) -> Result<&ReviewTask, ReviewError> {
        self.tasks
            .get(task_id)
            .ok_or_else(|| ReviewError::UnknownTask(task_id.to_string()))
    }

    fn get_mut(&mut self, task_id: &str) -> Result<&mut ReviewTask, ReviewError> {
        self.tasks
            .get_mut(task_id)
            .ok_or_else(|| ReviewError::UnknownTask(task_id.to_string()))
    }

    pub fn claim(&mut self, task_id: &str, reviewer_id: &str, role: ReviewerRole) -> Result<ReviewTask, ReviewError> {
        let task = self.get_mut(task_id)?;
        check_role(task, role)?;
        match (&task.state, &task.claimed_by) {
            (TaskState::Resolved, _) => Err(ReviewError::StaleTask(task_id.to_string())),
            (TaskState::Claimed, Some(holder)) if holder != reviewer_id => Err(ReviewError::ClaimConflict {
                task_id: task_id.to_string(),
                holder: holder.clone(),
            }),
            _ => {
                task.state = TaskState::Claimed;
                task.claimed_by = Some(reviewer_id.to_string());
                Ok(task.clone())
            }
        }
    }

    pub fn release_claim(&mut self, task_id: &str, reviewer_id: &str) -> Result<ReviewTask, ReviewError> {
        let task = self.get_mut(task_id)?;
        match (&task.state, &task.claimed_by) {
            (TaskState::Resolved, _) => Err(ReviewError::StaleTask(task_id.to_string())),
            (TaskState::Claimed, Some(holder)) if holder != reviewer_id => Err(ReviewError::ClaimConflict {
                task_id: task_id.to_string(),
                holder: holder.clone(),
            }),
            _ => {
                task.state = TaskState::Open;
                task.claimed_by = None;
                Ok(task.clone())
            }
        }
    }

    /// Unresolved tasks for a role, oldest first.
    pub fn open_tasks(&self, role: Option<ReviewerRole>) -> Vec<&ReviewTask> {
        let mut out: Vec<&ReviewTask> = self
            .tasks
            .values()
            .filter(|t| t.state != TaskState::Resolved && role.is_none_or(|r| t.required_role == r))
            .collect();
        out.sort_by(|a, b| (a.created_at, &a.task_id).cmp(&(b.created_at, &b.task_id)));
        out
    }

    pub fn for_artifact(&self, artifact_id: &str) -> Vec<&ReviewTask> {
        self.tasks.values().filter(|t| t.artifact_id == artifact_id).collect()
    }
}

fn check_role(task: &ReviewTask, role: ReviewerRole) -> Result<(), ReviewError> {
    if task.required_role != role {
        return Err(ReviewError::RoleMismatch {
            required: task.required_role.as_str().into(),
            actual: role.as_str().into(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackEvent {
    pub event_id: String,
    pub artifact_id: String,
    pub task_id: String,
    pub reviewer_id: String,
    pub reviewer_role: ReviewerRole,
    pub timestamp: Timestamp,
    pub decision: ReviewDecision,
    pub eou_rating: Option<u8>,
    pub comment: String,
    pub requirement_ids: Vec<String>,
    pub ui_node_ids: Vec<String>,
    pub policy_version: u64,
    pub prev_event_hash: String,
    pub event_hash: String,
}

impl Chained for FeedbackEvent {
    const HASH_FIELD: &'static str = "event_hash";

    fn prev_hash(&self) -> &str {
        &self.prev_event_hash
    }

    fn own_hash(&self) -> &str {
        &self.event_hash
    }
}

/// A decision as submitted by a reviewer, before validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionInput {
    pub task_id: String,
    pub reviewer_id: String,
    pub reviewer_role: ReviewerRole,
    pub decision: ReviewDecision,
    #[serde(default)]
    pub eou_rating: Option<i64>,
    #[serde(default)]
    pub comment: String,
    #[serde(default)]
    pub requirement_ids: Vec<String>,
    #[serde(default)]
    pub ui_node_ids: Vec<String>,
}

/// Instruction to regenerate an artifact after `request_revision`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevisionOrder {
    pub artifact_id: String,
    pub event_id: String,
    pub notes: Vec<String>,
    pub requirement_ids: Vec<String>,
    pub ui_node_ids: Vec<String>,
}

/// Append-only feedback log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeedbackLog {
    events: Vec<FeedbackEvent>,
}

impl FeedbackLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Load a verified log. On tamper, returns the report.
    pub fn from_jsonl(bytes: &[u8]) -> Result<Self, ChainReport> {
        let report = verify_jsonl::<FeedbackEvent>(bytes);
        if !report.valid {
            return Err(report);
        }
        let text = std::str::from_utf8(bytes).expect("verified as UTF-8");
        let events = text
            .lines()
            .map(|l| serde_json::from_str(l).expect("verified line parses"))
            .collect();
        Ok(FeedbackLog { events })
    }

    pub fn events(&self) -> &[FeedbackEvent] {
        &self.events
    }

    pub fn head(&self) -> &str {
        self.events.last().map_or(GENESIS_HASH, |e| &e.event_hash)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn get(&self, event_id: &str) -> Option<&FeedbackEvent> {
        self.events.iter().find(|e| e.event_id == event_id)
    }

    pub fn for_artifact<'a>(&'a self, artifact_id: &'a str) -> impl Iterator<Item = &'a FeedbackEvent> + 'a {
        self.events.iter().filter(move |e| e.artifact_id == artifact_id)
    }

    pub fn next_event_id(&self) -> String {
        format!("fb-{:06}", self.events.len() + 1)
    }

    /// Seal an event against the current head and append it.
    pub fn append(&mut self, mut event: FeedbackEvent) -> &FeedbackEvent {
        event.prev_event_hash = self.head().to_string();
        event.event_hash = event.compute_hash();
        self.events.push(event);
        self.events.last().expect("just pushed")
    }

    pub fn to_jsonl(&self) -> String {
        to_jsonl(&self.events)
    }

    pub fn verify(&self) -> ChainReport {
        verify_feedback_chain(&self.events)
    }
}

pub fn verify_feedback_chain(events: &[FeedbackEvent]) -> ChainReport {
    verify_chain(events)
}

/// Everything `submit_decision` needs besides the queue and the log.
pub struct SubmitContext<'a> {
    pub registry: &'a RegistrySnapshot,
    pub artifact: &'a UiArtifact,
    pub policy_version: u64,
    pub now: Timestamp,
}

/// Validate and record a reviewer decision. Resolves the task.
pub fn submit_decision(
    queue: &mut ReviewQueue,
    log: &mut FeedbackLog,
    input: DecisionInput,
    ctx: &SubmitContext<'_>,
) -> Result<FeedbackEvent, ReviewError> {
    let task = queue.get(&input.task_id)?;
    if task.state == TaskState::Resolved {
        return Err(ReviewError::StaleTask(input.task_id));
    }
    if let (TaskState::Claimed, Some(holder)) = (task.state, &task.claimed_by) {
        if *holder != input.reviewer_id {
            return Err(ReviewError::ClaimConflict {
                task_id: input.task_id,
                holder: holder.clone(),
            });
        }
    }
    check_role(task, input.reviewer_role)?;
    let eou_rating = match input.eou_rating {
        None => None,
        Some(r @ 1..=5) => Some(r as u8),
        Some(r) => return Err(ReviewError::RatingOutOfRange(r)),
    };
    if input.decision.needs_rationale() && input.comment.trim().is_empty() {
        let name = serde_json::to_value(input.decision).expect("decision serializes");
        return Err(ReviewError::MissingRationale(name.as_str().unwrap_or_default().to_string()));
    }
    if input.requirement_ids.is_empty() {
        return Err(ReviewError::MissingRequirement);
    }
    let unresolved = ctx.registry.unresolved(input.requirement_ids.iter());
    if !unresolved.is_empty() {
        return Err(ReviewError::UnresolvedRequirement(unresolved));
    }
    let known = ctx.artifact.node_ids();
    let unknown: Vec<String> = input
        .ui_node_ids
        .iter()
        .filter(|id| !known.contains(*id))
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(ReviewError::UnknownNode(unknown));
    }
    let event = FeedbackEvent {
        event_id: log.next_event_id(),
        artifact_id: task.artifact_id.clone(),
        task_id: input.task_id.clone(),
        reviewer_id: input.reviewer_id,
        reviewer_role: input.reviewer_role,
        timestamp: ctx.now,
        decision: input.decision,
        eou_rating,
        comment: input.comment,
        requirement_ids: input.requirement_ids,
        ui_node_ids: input.ui_node_ids,
        policy_version: ctx.policy_version,
        prev_event_hash: String::new(),
        event_hash: String::new(),
    };
    let event = log.append(event).clone();
    let task = queue.get_mut(&input.task_id)?;
    task.state = TaskState::Resolved;
    Ok(event)
}

/// Revision order for a `request_revision` event.
pub fn revision_order(event: &FeedbackEvent) -> Option<RevisionOrder> {
    (event.decision == ReviewDecision::RequestRevision).then(|| RevisionOrder {
        artifact_id: event.artifact_id.clone(),
        event_id: event.event_id.clone(),
        notes: vec![event.comment.clone()],
        requirement_ids: event.requirement_ids.clone(),
        ui_node_ids: event.ui_node_ids.clone(),
    })
}

/// Checkpoint H from a rated event.
pub fn human_result(event: &FeedbackEvent, policy: &PolicyConfig, profile: &UserProfile) -> Option<CheckpointResult> {
    let rating = event.eou_rating?;
    let (threshold, comparator) = policy.threshold_for(Checkpoint::H, profile)?;
    Some(CheckpointResult::new(
        Checkpoint::H,
        "ease_of_understanding",
        Some(rating as f64),
        threshold,
        comparator,
        event.ui_node_ids.clone(),
        vec![ids::UNDERSTANDING.to_string()],
        CheckpointDetail::Human {
            event_id: event.event_id.clone(),
            reviewer_role: event.reviewer_role,
            decision: event.decision,
            comment: event.comment.clone(),
        },
    ))
}
