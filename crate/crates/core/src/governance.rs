//! Governance: evidence-justified, versioned updates of the policy surface,
//! decision replay under pinned versions, and compliance reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::checkpoints::safety::{detect_safety_segments, LexiconEntry, SafetyLexicon};
use crate::checkpoints::{Checkpoint, CheckpointResult};
use crate::digest::{sha256_hex, to_canonical, to_jsonl, verify_chain, ChainReport, Chained, GENESIS_HASH};
use crate::escalation::{
    decide_escalation, EscalationDecision, EscalationError, PolicyConfig, ReviewerRole, ThresholdEntry, Trigger,
};
use crate::generation::{PromptTemplate, UiArtifact};
use crate::review::{FeedbackEvent, ReviewDecision};
use crate::supervision::DriftConfig;
use crate::trace::{AdaptationRule, Need, Registry, RequirementRecord, TraceError};
use crate::Timestamp;

/// Everything a governance action can change, at one policy version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySurface {
    pub policy: PolicyConfig,
    pub registry_version: u64,
    pub lexicon: SafetyLexicon,
    pub drift: DriftConfig,
    pub prompt_templates: BTreeMap<String, PromptTemplate>,
}

impl PolicySurface {
    pub fn version(&self) -> u64 {
        self.policy.policy_version
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    ThresholdUpdate,
    RuleUpdate,
    PromptTemplateUpdate,
    RequirementRefinement,
    LexiconUpdate,
    DriftConfigUpdate,
}

impl ActionKind {
    pub const ALL: [ActionKind; 6] = [
        ActionKind::ThresholdUpdate,
        ActionKind::RuleUpdate,
        ActionKind::PromptTemplateUpdate,
        ActionKind::RequirementRefinement,
        ActionKind::LexiconUpdate,
        ActionKind::DriftConfigUpdate,
    ];
}

/// A governance change as requested by an actor.
///
/// Targets: `"<checkpoint>/<need>"` for thresholds (e.g. `"R/cognitive_impairment"`),
/// the rule, template or requirement id for those kinds, `"lexicon"` and
/// `"drift"` for the singleton configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRequest {
    pub kind: ActionKind,
    pub target_id: String,
    pub after: Value,
    pub justification_event_ids: Vec<String>,
    pub actor: String,
    pub actor_role: ReviewerRole,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GovernanceAction {
    pub action_id: String,
    pub kind: ActionKind,
    pub target_id: String,
    pub before: Value,
    pub after: Value,
    pub justification_event_ids: Vec<String>,
    pub actor: String,
    pub new_policy_version: u64,
    pub registry_version: u64,
    pub applied_at: Timestamp,
    pub prev_action_hash: String,
    pub action_hash: String,
}

impl Chained for GovernanceAction {
    const HASH_FIELD: &'static str = "action_hash";

    fn prev_hash(&self) -> &str {
        &self.prev_action_hash
    }

    fn own_hash(&self) -> &str {
        &self.action_hash
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GovernanceError {
    #[error("actor {actor} with role {role} may not apply governance actions")]
    UnauthorizedActor { actor: String, role: String },
    #[error("unresolved justification ids: {0:?}")]
    UnresolvedJustification(Vec<String>),
    #[error("change leaves {0} unchanged")]
    NoOpChange(String),
    #[error("unknown target {0}")]
    UnknownTarget(String),
    #[error("invalid change: {0}")]
    InvalidChange(String),
    #[error("policy version {0} is not retained")]
    UnknownVersion(u64),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Escalation(#[from] EscalationError),
    #[error("missing evidence: {0}")]
    MissingEvidence(String),
    #[error("governance chain is invalid at index {0}")]
    BrokenChain(usize),
}

fn parse<T: serde::de::DeserializeOwned>(value: &Value, what: &str) -> Result<T, GovernanceError> {
    serde_json::from_value(value.clone()).map_err(|e| GovernanceError::InvalidChange(format!("{what}: {e}")))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("policy records serialize")
}

fn parse_threshold_target(target: &str) -> Result<(Checkpoint, Need), GovernanceError> {
    let unknown = || GovernanceError::UnknownTarget(target.to_string());
    let (cp, need) = target.split_once('/').ok_or_else(unknown)?;
    let cp: Checkpoint = serde_json::from_value(Value::String(cp.to_string())).map_err(|_| unknown())?;
    let need: Need = serde_json::from_value(Value::String(need.to_string())).map_err(|_| unknown())?;
    Ok((cp, need))
}

/// State change described by one action, applied to copies.
fn transition(
    surface: &PolicySurface,
    registry: &Registry,
    kind: ActionKind,
    target: &str,
    after: &Value,
) -> Result<(PolicySurface, Option<Registry>, Value, Value), GovernanceError> {
    let mut next = surface.clone();
    let snap = registry.current();
    let (before, after, new_registry) = match kind {
        ActionKind::ThresholdUpdate => {
            let (checkpoint, need) = parse_threshold_target(target)?;
            let entry: ThresholdEntry = parse(after, "threshold")?;
            if (entry.checkpoint, entry.need) != (checkpoint, need) {
                return Err(GovernanceError::InvalidChange(format!("entry does not match target {target}")));
            }
            let before = surface
                .policy
                .thresholds
                .iter()
                .find(|t| t.checkpoint == checkpoint && t.need == need)
                .map_or(Value::Null, to_value);
            next.policy.set_threshold(entry);
            (before, to_value(&entry), None)
        }
        ActionKind::RuleUpdate => {
            let rule: AdaptationRule = parse(after, "rule")?;
            let existing = snap
                .rules
                .get(target)
                .ok_or_else(|| GovernanceError::UnknownTarget(target.to_string()))?;
            if rule.id != target {
                return Err(GovernanceError::InvalidChange("rule id does not match target".into()));
            }
            let before = to_value(existing);
            if before == to_value(&rule) {
                return Err(GovernanceError::NoOpChange(target.to_string()));
            }
            let mut reg = registry.clone();
            reg.register_rule(rule.clone())?;
            (before, to_value(&rule), Some(reg))
        }
        ActionKind::RequirementRefinement => {
            let rec: RequirementRecord = parse(after, "requirement")?;
            let existing = snap
                .requirements
                .get(target)
                .ok_or_else(|| GovernanceError::UnknownTarget(target.to_string()))?;
            if rec.id != target {
                return Err(GovernanceError::InvalidChange("requirement id does not match target".into()));
            }
            let mut same = rec.clone();
            same.revision = existing.revision;
            if same == *existing {
                return Err(GovernanceError::NoOpChange(target.to_string()));
            }
            let before = to_value(existing);
            let mut reg = registry.clone();
            reg.refine_requirement(rec)?;
            let stored = to_value(&reg.current().requirements[target]);
            (before, stored, Some(reg))
        }
        ActionKind::PromptTemplateUpdate => {
            let mut tpl: PromptTemplate = parse(after, "prompt template")?;
            let existing = surface
                .prompt_templates
                .get(target)
                .ok_or_else(|| GovernanceError::UnknownTarget(target.to_string()))?;
            if tpl.id != target {
                return Err(GovernanceError::InvalidChange("template id does not match target".into()));
            }
            if tpl.text == existing.text {
                return Err(GovernanceError::NoOpChange(target.to_string()));
            }
            tpl.version = existing.version + 1;
            next.prompt_templates.insert(tpl.id.clone(), tpl.clone());
            (to_value(existing), to_value(&tpl), None)
        }
        ActionKind::LexiconUpdate => {
            if target != "lexicon" {
                return Err(GovernanceError::UnknownTarget(target.to_string()));
            }
            let entries: Vec<LexiconEntry> = parse(after, "lexicon")?;
            let lexicon = SafetyLexicon::new(entries);
            next.lexicon = lexicon.clone();
            (to_value(&surface.lexicon.entries), to_value(&lexicon.entries), None)
        }
        ActionKind::DriftConfigUpdate => {
            if target != "drift" {
                return Err(GovernanceError::UnknownTarget(target.to_string()));
            }
            let drift: DriftConfig = parse(after, "drift config")?;
            if !drift.z_threshold.is_finite() || drift.window_size == 0 || drift.baseline_windows == 0 {
                return Err(GovernanceError::InvalidChange("drift config out of range".into()));
            }
            next.drift = drift;
            (to_value(&surface.drift), to_value(&drift), None)
        }
    };
    if to_canonical(&before) == to_canonical(&after) {
        return Err(GovernanceError::NoOpChange(target.to_string()));
    }
    next.policy.policy_version = surface.policy.policy_version + 1;
    if let Some(reg) = &new_registry {
        next.registry_version = reg.version();
    }
    next.policy.validate()?;
    Ok((next, new_registry, before, after))
}

/// Policy history, registry and the governance chain.
#[derive(Debug, Clone)]
pub struct Governance {
    history: Vec<PolicySurface>,
    registry: Registry,
    actions: Vec<GovernanceAction>,
}

impl Governance {
    pub fn new(genesis: PolicySurface, registry: Registry) -> Result<Self, GovernanceError> {
        genesis.policy.validate()?;
        let mut genesis = genesis;
        genesis.registry_version = registry.version();
        Ok(Governance {
            history: vec![genesis],
            registry,
            actions: Vec::new(),
        })
    }

    /// Rebuild state by re-applying a verified action chain to the genesis.
    pub fn restore(
        genesis: PolicySurface,
        registry: Registry,
        actions: Vec<GovernanceAction>,
    ) -> Result<Self, GovernanceError> {
        let report = verify_chain(&actions);
        if let Some(i) = report.first_bad_index {
            return Err(GovernanceError::BrokenChain(i));
        }
        let mut gov = Self::new(genesis, registry)?;
        for (i, action) in actions.into_iter().enumerate() {
            let (next, reg, _, after) =
                transition(gov.current(), &gov.registry, action.kind, &action.target_id, &action.after)?;
            if next.version() != action.new_policy_version || to_canonical(&after) != to_canonical(&action.after) {
                return Err(GovernanceError::BrokenChain(i));
            }
            gov.commit(next, reg);
            gov.actions.push(action);
        }
        Ok(gov)
    }

    fn commit(&mut self, next: PolicySurface, registry: Option<Registry>) {
        if let Some(reg) = registry {
            self.registry = reg;
        }
        self.history.push(next);
    }

    pub fn current(&self) -> &PolicySurface {
        self.history.last().expect("genesis surface")
    }

    pub fn policy_version(&self) -> u64 {
        self.current().version()
    }

    /// Exact surface in force at policy version `v`.
    pub fn at(&self, version: u64) -> Result<&PolicySurface, GovernanceError> {
        let base = self.history[0].version();
        version
            .checked_sub(base)
            .and_then(|i| self.history.get(i as usize))
            .ok_or(GovernanceError::UnknownVersion(version))
    }

    pub fn history(&self) -> &[PolicySurface] {
        &self.history
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn registry_mut(&mut self) -> &mut Registry {
        &mut self.registry
    }

    pub fn actions(&self) -> &[GovernanceAction] {
        &self.actions
    }

    pub fn head(&self) -> &str {
        self.actions.last().map_or(GENESIS_HASH, |a| &a.action_hash)
    }

    pub fn verify(&self) -> ChainReport {
        verify_chain(&self.actions)
    }

    pub fn to_jsonl(&self) -> String {
        to_jsonl(&self.actions)
    }

    /// Apply one action. `resolves` reports whether a justification id names
    /// an existing feedback event or drift alert.
    pub fn apply_action(
        &mut self,
        request: ActionRequest,
        resolves: &dyn Fn(&str) -> bool,
        applied_at: Timestamp,
    ) -> Result<GovernanceAction, GovernanceError> {
        if request.actor_role != ReviewerRole::SystemOwner || request.actor.trim().is_empty() {
            return Err(GovernanceError::UnauthorizedActor {
                actor: request.actor,
                role: request.actor_role.as_str().into(),
            });
        }
        let unresolved: Vec<String> = request
            .justification_event_ids
            .iter()
            .filter(|id| !resolves(id))
            .cloned()
            .collect();
        if request.justification_event_ids.is_empty() || !unresolved.is_empty() {
            return Err(GovernanceError::UnresolvedJustification(unresolved));
        }
        let (next, reg, before, after) =
            transition(self.current(), &self.registry, request.kind, &request.target_id, &request.after)?;
        let mut action = GovernanceAction {
            action_id: format!("gov-{:06}", self.actions.len() + 1),
            kind: request.kind,
            target_id: request.target_id,
            before,
            after,
            justification_event_ids: request.justification_event_ids,
            actor: request.actor,
            new_policy_version: next.version(),
            registry_version: next.registry_version,
            applied_at,
            prev_action_hash: self.head().to_string(),
            action_hash: String::new(),
        };
        action.action_hash = action.compute_hash();
        self.commit(next, reg);
        self.actions.push(action.clone());
        Ok(action)
    }
}

/// Persisted inputs of one escalation decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionEvidence {
    pub artifact: UiArtifact,
    pub results: Vec<CheckpointResult>,
    pub safety_nodes: Vec<String>,
    pub registry_version: u64,
    pub lexicon_version: String,
    pub decision: EscalationDecision,
}

/// Recompute a decision from its evidence under the pinned versions.
pub fn replay_decision(
    evidence: &DecisionEvidence,
    governance: &Governance,
) -> Result<EscalationDecision, GovernanceError> {
    let surface = governance.at(evidence.decision.policy_version)?;
    if surface.lexicon.version != evidence.lexicon_version {
        return Err(GovernanceError::MissingEvidence(format!(
            "lexicon {} is not in force at policy v{}",
            evidence.lexicon_version,
            surface.version()
        )));
    }
    let registry = governance.registry().at(evidence.registry_version)?;
    let safety = detect_safety_segments(&evidence.artifact, &surface.lexicon);
    if safety != evidence.safety_nodes {
        return Err(GovernanceError::MissingEvidence("safety segments differ from the recorded set".into()));
    }
    Ok(decide_escalation(
        &evidence.results,
        &safety,
        &evidence.artifact,
        &surface.policy,
        &registry,
        evidence.decision.decided_at,
    )?)
}

pub const COMPLIANCE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceCheckpoint {
    pub checkpoint: Checkpoint,
    pub metric_name: String,
    pub value: Option<f64>,
    pub threshold: f64,
    pub comparator: crate::checkpoints::Comparator,
    pub passed: bool,
    pub requirement_ids: Vec<String>,
    pub ui_node_ids: Vec<String>,
    pub detail: crate::checkpoints::CheckpointDetail,
}

impl From<&CheckpointResult> for ComplianceCheckpoint {
    fn from(r: &CheckpointResult) -> Self {
        ComplianceCheckpoint {
            checkpoint: r.checkpoint,
            metric_name: r.metric_name.clone(),
            value: r.value,
            threshold: r.threshold,
            comparator: r.comparator,
            passed: r.passed,
            requirement_ids: r.requirement_ids.clone(),
            ui_node_ids: r.ui_node_ids.clone(),
            detail: r.detail.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceEscalation {
    pub status: crate::escalation::EscalationStatus,
    pub triggers: Vec<Trigger>,
    pub required_role: Option<ReviewerRole>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceEvent {
    pub event_id: String,
    pub event_hash: String,
    pub reviewer_role: ReviewerRole,
    pub decision: ReviewDecision,
    pub eou_rating: Option<u8>,
    pub comment: String,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GovernanceContext {
    pub policy_version: u64,
    pub registry_version: u64,
    pub lexicon_version: String,
}

/// The compliance.json document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceDocument {
    pub schema_version: u32,
    pub artifact_id: String,
    pub profile_id: String,
    pub source_id: String,
    pub policy_version: u64,
    pub generated_at: Timestamp,
    pub checkpoints: Vec<ComplianceCheckpoint>,
    pub escalation: ComplianceEscalation,
    pub review_events: Vec<ComplianceEvent>,
    pub governance_context: GovernanceContext,
    pub evidence_hash: String,
}

impl ComplianceDocument {
    /// Digest over the document without its `evidence_hash`.
    pub fn compute_evidence_hash(&self) -> String {
        let mut value = to_value(self);
        if let Value::Object(map) = &mut value {
            map.remove("evidence_hash");
        }
        sha256_hex(crate::digest::canonical_json(&value).as_bytes())
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("compliance document serializes");
        text.push('\n');
        text
    }
}

/// Build the report. `human` carries H results derived from rated events.
pub fn compliance_report(
    evidence: &DecisionEvidence,
    events: &[&FeedbackEvent],
    human: &[CheckpointResult],
) -> ComplianceDocument {
    let decision = &evidence.decision;
    let role = decision.required_role;
    let deciding = events
        .iter()
        .position(|e| Some(e.reviewer_role) == role && e.artifact_id == decision.artifact_id);
    let review_events = events
        .iter()
        .enumerate()
        .map(|(i, e)| ComplianceEvent {
            event_id: e.event_id.clone(),
            event_hash: e.event_hash.clone(),
            reviewer_role: e.reviewer_role,
            decision: e.decision,
            eou_rating: e.eou_rating,
            comment: e.comment.clone(),
            terminal: deciding == Some(i),
        })
        .collect();
    let generated_at = events
        .iter()
        .map(|e| e.timestamp)
        .chain(std::iter::once(decision.decided_at))
        .max()
        .expect("at least the decision timestamp");
    let mut doc = ComplianceDocument {
        schema_version: COMPLIANCE_SCHEMA_VERSION,
        artifact_id: evidence.artifact.artifact_id.clone(),
        profile_id: evidence.artifact.profile_id.clone(),
        source_id: evidence.artifact.source_id.clone(),
        policy_version: decision.policy_version,
        generated_at,
        checkpoints: evidence.results.iter().chain(human).map(Into::into).collect(),
        escalation: ComplianceEscalation {
            status: decision.status,
            triggers: decision.triggers.clone(),
            required_role: decision.required_role,
        },
        review_events,
        governance_context: GovernanceContext {
            policy_version: decision.policy_version,
            registry_version: evidence.registry_version,
            lexicon_version: evidence.lexicon_version.clone(),
        },
        evidence_hash: String::new(),
    };
    doc.evidence_hash = doc.compute_evidence_hash();
    doc
}
