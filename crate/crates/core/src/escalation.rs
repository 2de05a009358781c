//! Escalation policy: turns checkpoint signals into auto-release, mandatory
//! review, or block, and records why.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::ids;
use crate::checkpoints::{Checkpoint, CheckpointResult, Comparator, ReadabilityIndex};
use crate::generation::UiArtifact;
use crate::review::{FeedbackEvent, ReviewDecision};
use crate::trace::{Need, RegistrySnapshot, UserProfile};
use crate::Timestamp;

pub const RELEASE_RULE: &str = "no artifact with an open mandatory review may be released";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewerRole {
    DomainExpert,
    AccessibilitySpecialist,
    EndUserPanel,
    SystemOwner,
}

impl ReviewerRole {
    pub const ALL: [ReviewerRole; 4] = [
        ReviewerRole::DomainExpert,
        ReviewerRole::AccessibilitySpecialist,
        ReviewerRole::EndUserPanel,
        ReviewerRole::SystemOwner,
    ];

    /// Roles whose approval can release an escalated artifact.
    pub fn can_release(self) -> bool {
        matches!(self, ReviewerRole::DomainExpert | ReviewerRole::AccessibilitySpecialist)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ReviewerRole::DomainExpert => "domain_expert",
            ReviewerRole::AccessibilitySpecialist => "accessibility_specialist",
            ReviewerRole::EndUserPanel => "end_user_panel",
            ReviewerRole::SystemOwner => "system_owner",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.as_str() == text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SafetySegmentRule {
    AlwaysEscalate,
    EscalateIfAnyFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownConfidenceRule {
    TreatAsHighUncertainty,
    Ignore,
}

/// Keys of the routing table. Threshold violations route per checkpoint;
/// critical factual findings have their own key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteKey {
    TraceabilityFailure,
    FactualCritical,
    ThresholdR,
    ThresholdS,
    ThresholdF,
    SafetySegment,
    HighUncertainty,
}

impl RouteKey {
    pub const ALL: [RouteKey; 7] = [
        RouteKey::TraceabilityFailure,
        RouteKey::FactualCritical,
        RouteKey::ThresholdR,
        RouteKey::ThresholdS,
        RouteKey::ThresholdF,
        RouteKey::SafetySegment,
        RouteKey::HighUncertainty,
    ];

    /// Higher is more severe.
    pub fn severity(self) -> u8 {
        match self {
            RouteKey::TraceabilityFailure => 4,
            RouteKey::FactualCritical => 3,
            RouteKey::ThresholdR | RouteKey::ThresholdS | RouteKey::ThresholdF => 2,
            RouteKey::SafetySegment => 1,
            RouteKey::HighUncertainty => 0,
        }
    }

    fn threshold(checkpoint: Checkpoint) -> RouteKey {
        match checkpoint {
            Checkpoint::R => RouteKey::ThresholdR,
            Checkpoint::S => RouteKey::ThresholdS,
            Checkpoint::F | Checkpoint::H => RouteKey::ThresholdF,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEntry {
    pub checkpoint: Checkpoint,
    pub need: Need,
    pub threshold: f64,
    pub comparator: Comparator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub policy_version: u64,
    pub readability_index: ReadabilityIndex,
    pub thresholds: Vec<ThresholdEntry>,
    pub safety_segment_rule: SafetySegmentRule,
    pub unknown_confidence_rule: UnknownConfidenceRule,
    pub confidence_floor: f64,
    pub role_routing: BTreeMap<RouteKey, ReviewerRole>,
    pub release_rule: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EscalationError {
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("results do not cover checkpoint {0:?}")]
    IncompleteResults(Checkpoint),
    #[error("results belong to a different artifact")]
    ArtifactMismatch,
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<(), EscalationError> {
        let bad = |m: String| Err(EscalationError::InvalidPolicy(m));
        if self.policy_version < 1 {
            return bad("policy_version must be at least 1".into());
        }
        for key in RouteKey::ALL {
            match self.role_routing.get(&key) {
                None => return bad(format!("no role routed for {key:?}")),
                Some(role) if key != RouteKey::TraceabilityFailure && !role.can_release() => {
                    return bad(format!("{key:?} routed to {}, which cannot release", role.as_str()))
                }
                Some(_) => {}
            }
        }
        if !(self.confidence_floor.is_finite() && (0.0..=1.0).contains(&self.confidence_floor)) {
            return bad("confidence_floor must lie in [0, 1]".into());
        }
        let mut seen = BTreeSet::new();
        for t in &self.thresholds {
            if !t.threshold.is_finite() {
                return bad(format!("threshold for {:?}/{} is not finite", t.checkpoint, t.need.as_str()));
            }
            if !seen.insert((t.checkpoint, t.need)) {
                return bad(format!("duplicate threshold for {:?}/{}", t.checkpoint, t.need.as_str()));
            }
        }
        for cp in [Checkpoint::R, Checkpoint::S, Checkpoint::F, Checkpoint::H] {
            if !seen.contains(&(cp, Need::None)) {
                return bad(format!("no default threshold for {cp:?}"));
            }
        }
        if self.release_rule != RELEASE_RULE {
            return bad("release_rule is fixed".into());
        }
        Ok(())
    }

    /// Threshold in force for a checkpoint and profile: the strictest entry
    /// among the profile's needs, else the `none` entry. A profile's
    /// readability floor replaces the R threshold.
    pub fn threshold_for(&self, checkpoint: Checkpoint, profile: &UserProfile) -> Option<(f64, Comparator)> {
        if checkpoint == Checkpoint::R {
            if let Some(floor) = profile.readability_floor_override {
                return Some((floor, Comparator::Ge));
            }
        }
        let needs = profile.effective_needs();
        let matching = self
            .thresholds
            .iter()
            .filter(|t| t.checkpoint == checkpoint && needs.contains(&t.need));
        let chosen = matching.fold(None::<&ThresholdEntry>, |best, t| match best {
            Some(b) if b.comparator == t.comparator && b.comparator.stricter(b.threshold, t.threshold) => Some(b),
            _ => Some(t),
        });
        chosen
            .or_else(|| {
                self.thresholds
                    .iter()
                    .find(|t| t.checkpoint == checkpoint && t.need == Need::None)
            })
            .map(|t| (t.threshold, t.comparator))
    }

    pub fn set_threshold(&mut self, entry: ThresholdEntry) {
        match self
            .thresholds
            .iter_mut()
            .find(|t| t.checkpoint == entry.checkpoint && t.need == entry.need)
        {
            Some(t) => *t = entry,
            None => self.thresholds.push(entry),
        }
    }

    pub fn role_for(&self, key: RouteKey) -> Result<ReviewerRole, EscalationError> {
        self.role_routing
            .get(&key)
            .copied()
            .ok_or_else(|| EscalationError::InvalidPolicy(format!("no role routed for {key:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EscalationStatus {
    AutoReleased,
    Escalated,
    Blocked,
}

impl EscalationStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            EscalationStatus::AutoReleased => "auto_released",
            EscalationStatus::Escalated => "escalated",
            EscalationStatus::Blocked => "blocked",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    ThresholdViolation,
    SafetySegment,
    HighUncertainty,
    TraceabilityFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trigger {
    pub kind: TriggerKind,
    pub checkpoint: Option<Checkpoint>,
    pub ui_node_ids: Vec<String>,
    pub requirement_ids: Vec<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscalationDecision {
    pub artifact_id: String,
    pub policy_version: u64,
    pub status: EscalationStatus,
    pub triggers: Vec<Trigger>,
    pub required_role: Option<ReviewerRole>,
    pub decided_at: Timestamp,
}

fn push_unique(out: &mut Vec<String>, items: impl IntoIterator<Item = String>) {
    for item in items {
        if !out.contains(&item) {
            out.push(item);
        }
    }
}

fn describe_value(v: Option<f64>) -> String {
    v.map_or_else(|| "no value".to_string(), |v| format!("{v}"))
}

/// Pure, deterministic escalation decision.
pub fn decide_escalation(
    results: &[CheckpointResult],
    safety_nodes: &[String],
    artifact: &UiArtifact,
    policy: &PolicyConfig,
    registry: &RegistrySnapshot,
    decided_at: Timestamp,
) -> Result<EscalationDecision, EscalationError> {
    policy.validate()?;
    for cp in [Checkpoint::R, Checkpoint::S, Checkpoint::F] {
        if !results.iter().any(|r| r.checkpoint == cp) {
            return Err(EscalationError::IncompleteResults(cp));
        }
    }

    let mut triggers: Vec<(RouteKey, Trigger)> = Vec::new();

    let mut referenced: Vec<String> = artifact.requirement_ids().into_iter().collect();
    for r in results {
        push_unique(&mut referenced, r.requirement_ids.iter().cloned());
    }
    let unresolved = registry.unresolved(referenced.iter());
    let node_ids = artifact.node_ids();
    let mut dangling: Vec<String> = Vec::new();
    for r in results {
        push_unique(
            &mut dangling,
            r.ui_node_ids.iter().filter(|id| !node_ids.contains(*id)).cloned(),
        );
    }
    push_unique(
        &mut dangling,
        safety_nodes.iter().filter(|id| !node_ids.contains(*id)).cloned(),
    );
    if !unresolved.is_empty() || !dangling.is_empty() {
        let mut reason = Vec::new();
        if !unresolved.is_empty() {
            reason.push(format!("unresolved requirement ids: {}", unresolved.join(", ")));
        }
        if !dangling.is_empty() {
            reason.push(format!("unknown ui node ids: {}", dangling.join(", ")));
        }
        triggers.push((
            RouteKey::TraceabilityFailure,
            Trigger {
                kind: TriggerKind::TraceabilityFailure,
                checkpoint: None,
                ui_node_ids: dangling,
                requirement_ids: unresolved,
                reason: reason.join("; "),
            },
        ));
    }

    let mut any_failure = false;
    for r in results {
        let critical = r.critical_findings();
        if r.passed && critical.is_empty() {
            continue;
        }
        any_failure = true;
        let (key, reason) = if !critical.is_empty() {
            let parts: Vec<String> = critical
                .iter()
                .map(|f| {
                    let field = serde_json::to_value(f.field).expect("field serializes");
                    let kind = serde_json::to_value(f.kind).expect("kind serializes");
                    let field = field.as_str().unwrap_or_default().to_string();
                    let kind = kind.as_str().unwrap_or_default().to_string();
                    match &f.found {
                        Some(found) => format!("{kind} on {field}: expected {}, found {found}", f.expected),
                        None => format!("{kind} on {field}: expected {}", f.expected),
                    }
                })
                .collect();
            (RouteKey::FactualCritical, format!("critical factual findings: {}", parts.join("; ")))
        } else if r.is_error() {
            (
                RouteKey::threshold(r.checkpoint),
                format!("{} scorer failed; result counts as a violation", r.metric_name),
            )
        } else {
            (
                RouteKey::threshold(r.checkpoint),
                format!(
                    "{} {} violates {} {}",
                    r.metric_name,
                    describe_value(r.value),
                    r.comparator.symbol(),
                    r.threshold
                ),
            )
        };
        triggers.push((
            key,
            Trigger {
                kind: TriggerKind::ThresholdViolation,
                checkpoint: Some(r.checkpoint),
                ui_node_ids: r.ui_node_ids.clone(),
                requirement_ids: r.requirement_ids.clone(),
                reason,
            },
        ));
    }

    let known_safety: Vec<String> = safety_nodes.iter().filter(|id| node_ids.contains(*id)).cloned().collect();
    let safety_fires = !known_safety.is_empty()
        && match policy.safety_segment_rule {
            SafetySegmentRule::AlwaysEscalate => true,
            SafetySegmentRule::EscalateIfAnyFailure => any_failure,
        };
    if safety_fires {
        let mut reqs = Vec::new();
        for id in &known_safety {
            if let Some(node) = artifact.node(id) {
                push_unique(&mut reqs, node.requirement_ids.iter().cloned());
            }
        }
        if reqs.is_empty() {
            reqs.push(ids::WARNINGS.to_string());
        }
        triggers.push((
            RouteKey::SafetySegment,
            Trigger {
                kind: TriggerKind::SafetySegment,
                checkpoint: None,
                ui_node_ids: known_safety.clone(),
                requirement_ids: reqs,
                reason: format!("{} safety-critical segment(s) present", known_safety.len()),
            },
        ));
    }

    let uncertainty = match artifact.generator_confidence {
        None => (policy.unknown_confidence_rule == UnknownConfidenceRule::TreatAsHighUncertainty)
            .then(|| "generator confidence is unknown".to_string()),
        Some(c) if !c.is_finite() || c < policy.confidence_floor => Some(format!(
            "generator confidence {c} below floor {}",
            policy.confidence_floor
        )),
        Some(_) => None,
    };
    if let Some(reason) = uncertainty {
        triggers.push((
            RouteKey::HighUncertainty,
            Trigger {
                kind: TriggerKind::HighUncertainty,
                checkpoint: None,
                ui_node_ids: artifact.text_node_ids(),
                requirement_ids: vec![ids::FACTUAL.to_string(), ids::SEMANTIC.to_string()],
                reason,
            },
        ));
    }

    let top = triggers.iter().map(|(k, _)| *k).max_by_key(|k| k.severity());
    let status = if triggers.iter().any(|(k, _)| *k == RouteKey::TraceabilityFailure) {
        EscalationStatus::Blocked
    } else if triggers.is_empty() {
        EscalationStatus::AutoReleased
    } else {
        EscalationStatus::Escalated
    };
    let required_role = top.map(|k| policy.role_for(k)).transpose()?;
    Ok(EscalationDecision {
        artifact_id: artifact.artifact_id.clone(),
        policy_version: policy.policy_version,
        status,
        triggers: triggers.into_iter().map(|(_, t)| t).collect(),
        required_role,
        decided_at,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReleaseState {
    Releasable,
    Held,
    Blocked,
}

/// Release gate over a decision and the feedback log.
///
/// The first terminal event from the required role decides. Only approvals
/// by a release-authorized role count; anything after the deciding event is
/// ignored.
pub fn release_gate(decision: &EscalationDecision, events: &[FeedbackEvent]) -> ReleaseState {
    match decision.status {
        EscalationStatus::AutoReleased => ReleaseState::Releasable,
        EscalationStatus::Blocked => ReleaseState::Blocked,
        EscalationStatus::Escalated => {
            let Some(role) = decision.required_role else {
                return ReleaseState::Held;
            };
            let deciding = events
                .iter()
                .find(|e| e.artifact_id == decision.artifact_id && e.reviewer_role == role);
            match deciding.map(|e| e.decision) {
                None => ReleaseState::Held,
                Some(ReviewDecision::Approve) if role.can_release() => ReleaseState::Releasable,
                Some(ReviewDecision::Approve) => ReleaseState::Held,
                Some(ReviewDecision::Reject) | Some(ReviewDecision::RequestRevision) => ReleaseState::Blocked,
            }
        }
    }
}
