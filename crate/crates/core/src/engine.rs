//! In-memory orchestrator over the whole pipeline.
//!
//! The engine owns the governance state, the review queue, the feedback log and
//! the decision evidence of every submitted artifact. It performs no I/O; the
//! service layer persists what it returns.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoints::factual::{FactualScorer, RuleBasedChecker};
use crate::checkpoints::safety::detect_safety_segments;
use crate::checkpoints::semantic::{LexicalF1, SemanticScorer};
use crate::checkpoints::{evaluate_artifact, CheckpointResult, Scorers};
use crate::digest::ChainReport;
use crate::escalation::{
    decide_escalation, release_gate, EscalationDecision, EscalationError, EscalationStatus, ReleaseState, ReviewerRole,
};
use crate::generation::{
    generate_external, generate_template, GenerationContext, GenerationError, GeneratorPort, UiArtifact,
};
use crate::governance::{
    compliance_report, replay_decision, ActionRequest, ComplianceDocument, DecisionEvidence, Governance,
    GovernanceAction, GovernanceError, PolicySurface,
};
use crate::review::{
    human_result, revision_order, submit_decision, DecisionInput, FeedbackEvent, FeedbackLog, ReviewDecision,
    ReviewError, ReviewQueue, ReviewTask, RevisionOrder, SubmitContext, TaskState,
};
use crate::supervision::{
    monitoring_summary, supervise, ArtifactObservation, DriftAlert, FeedbackObservation, MonitoringSummary,
};
use crate::trace::{Category, Registry, RegistrySnapshot, SourceDocument, TraceError, UserProfile};
use crate::Timestamp;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("unknown source {0}")]
    UnknownSource(String),
    #[error("unknown artifact {0}")]
    UnknownArtifact(String),
    #[error("source {0} already registered with different content")]
    SourceConflict(String),
    #[error("artifact {0} already recorded with different content")]
    ArtifactConflict(String),
    #[error("artifact {0} has no pending revision request")]
    NoRevisionRequested(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Escalation(#[from] EscalationError),
    #[error(transparent)]
    Review(#[from] ReviewError),
    #[error(transparent)]
    Governance(#[from] GovernanceError),
}

impl EngineError {
    /// Stable error code shown to API clients.
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::UnknownSource(_) => "UNKNOWN_SOURCE",
            EngineError::UnknownArtifact(_) => "UNKNOWN_ARTIFACT",
            EngineError::SourceConflict(_) | EngineError::ArtifactConflict(_) => "DUPLICATE_ID_CONFLICT",
            EngineError::NoRevisionRequested(_) => "NO_REVISION_REQUESTED",
            EngineError::Trace(e) => match e {
                TraceError::DuplicateIdConflict(_) => "DUPLICATE_ID_CONFLICT",
                TraceError::UnresolvedRequirement(_) => "UNRESOLVED_REQUIREMENT",
                TraceError::UnknownVersion(_) => "UNKNOWN_VERSION",
                TraceError::UnknownProfile(_) => "UNKNOWN_PROFILE",
                TraceError::UnknownRule(_) => "UNKNOWN_RULE",
                TraceError::InvalidRecord(_) => "INVALID_RECORD",
                TraceError::RuleConflict { .. } => "RULE_CONFLICT",
            },
            EngineError::Generation(e) => match e {
                GenerationError::RuleConflict { .. } => "RULE_CONFLICT",
                GenerationError::RuleMismatch(_) => "RULE_MISMATCH",
                GenerationError::InvalidSource(_) => "INVALID_SOURCE",
                GenerationError::GeneratorUnavailable(_) => "GENERATOR_UNAVAILABLE",
                GenerationError::SchemaViolation(_) => "SCHEMA_VIOLATION",
            },
            EngineError::Escalation(e) => match e {
                EscalationError::InvalidPolicy(_) => "INVALID_POLICY",
                EscalationError::IncompleteResults(_) => "INCOMPLETE_RESULTS",
                EscalationError::ArtifactMismatch => "ARTIFACT_MISMATCH",
            },
            EngineError::Review(e) => match e {
                ReviewError::NotEscalated(_) => "NOT_ESCALATED",
                ReviewError::UnknownTask(_) => "UNKNOWN_TASK",
                ReviewError::RoleMismatch { .. } => "ROLE_MISMATCH",
                ReviewError::RatingOutOfRange(_) => "RATING_OUT_OF_RANGE",
                ReviewError::MissingRationale(_) => "MISSING_RATIONALE",
                ReviewError::StaleTask(_) => "STALE_TASK",
                ReviewError::ClaimConflict { .. } => "CLAIM_CONFLICT",
                ReviewError::MissingRequirement => "MISSING_REQUIREMENT",
                ReviewError::UnresolvedRequirement(_) => "UNRESOLVED_REQUIREMENT",
                ReviewError::UnknownNode(_) => "UNKNOWN_NODE",
            },
            EngineError::Governance(e) => match e {
                GovernanceError::UnauthorizedActor { .. } => "UNAUTHORIZED_ACTOR",
                GovernanceError::UnresolvedJustification(_) => "UNRESOLVED_JUSTIFICATION",
                GovernanceError::NoOpChange(_) => "NO_OP_CHANGE",
                GovernanceError::UnknownTarget(_) => "UNKNOWN_TARGET",
                GovernanceError::InvalidChange(_) => "INVALID_CHANGE",
                GovernanceError::UnknownVersion(_) => "UNKNOWN_VERSION",
                GovernanceError::Trace(_) => "TRACE_ERROR",
                GovernanceError::Escalation(_) => "INVALID_POLICY",
                GovernanceError::MissingEvidence(_) => "MISSING_EVIDENCE",
                GovernanceError::BrokenChain(_) => "BROKEN_CHAIN",
            },
        }
    }
}

/// Every error code [`EngineError::code`] can return.
pub const ERROR_CODES: &[&str] = &[
    "UNKNOWN_SOURCE",
    "UNKNOWN_ARTIFACT",
    "DUPLICATE_ID_CONFLICT",
    "NO_REVISION_REQUESTED",
    "UNRESOLVED_REQUIREMENT",
    "UNKNOWN_VERSION",
    "UNKNOWN_PROFILE",
    "UNKNOWN_RULE",
    "INVALID_RECORD",
    "RULE_CONFLICT",
    "RULE_MISMATCH",
    "INVALID_SOURCE",
    "GENERATOR_UNAVAILABLE",
    "SCHEMA_VIOLATION",
    "INVALID_POLICY",
    "INCOMPLETE_RESULTS",
    "ARTIFACT_MISMATCH",
    "NOT_ESCALATED",
    "UNKNOWN_TASK",
    "ROLE_MISMATCH",
    "RATING_OUT_OF_RANGE",
    "MISSING_RATIONALE",
    "STALE_TASK",
    "CLAIM_CONFLICT",
    "MISSING_REQUIREMENT",
    "UNKNOWN_NODE",
    "UNAUTHORIZED_ACTOR",
    "UNRESOLVED_JUSTIFICATION",
    "NO_OP_CHANGE",
    "UNKNOWN_TARGET",
    "INVALID_CHANGE",
    "TRACE_ERROR",
    "MISSING_EVIDENCE",
    "BROKEN_CHAIN",
];

/// Result of submitting one artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub evidence: DecisionEvidence,
    pub task: Option<ReviewTask>,
    /// False when the artifact had already been submitted.
    pub created: bool,
}

/// Result of one reviewer decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionOutcome {
    pub event: FeedbackEvent,
    pub release: ReleaseState,
    pub revision: Option<RevisionOrder>,
    pub human: Option<CheckpointResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayCheck {
    pub artifact_id: String,
    pub matches: bool,
    pub error: Option<String>,
}

/// Outcome of a full integrity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub feedback_chain: ChainReport,
    pub governance_chain: ChainReport,
    /// Record id to the requirement ids it cites but the registry lacks.
    pub unresolved_requirements: BTreeMap<String, Vec<String>>,
    /// Record id to the ui node ids it cites but its artifact lacks.
    pub dangling_nodes: BTreeMap<String, Vec<String>>,
    pub replay: Vec<ReplayCheck>,
    pub artifacts: usize,
}

impl AuditReport {
    pub fn ok(&self) -> bool {
        self.feedback_chain.valid
            && self.governance_chain.valid
            && self.unresolved_requirements.is_empty()
            && self.dangling_nodes.is_empty()
            && self.replay.iter().all(|r| r.matches)
    }
}

pub struct Engine {
    governance: Governance,
    queue: ReviewQueue,
    log: FeedbackLog,
    sources: BTreeMap<String, SourceDocument>,
    evidence: BTreeMap<String, DecisionEvidence>,
    order: Vec<String>,
    semantic: Arc<dyn SemanticScorer>,
    factual: Arc<dyn FactualScorer>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("policy_version", &self.policy_version())
            .field("artifacts", &self.order.len())
            .field("events", &self.log.len())
            .finish()
    }
}

impl Engine {
    pub fn new(genesis: PolicySurface, registry: Registry) -> Result<Self, EngineError> {
        Ok(Engine {
            governance: Governance::new(genesis, registry)?,
            queue: ReviewQueue::new(),
            log: FeedbackLog::new(),
            sources: BTreeMap::new(),
            evidence: BTreeMap::new(),
            order: Vec::new(),
            semantic: Arc::new(LexicalF1),
            factual: Arc::new(RuleBasedChecker),
        })
    }

    /// Engine over the illustrative registry and default policy surface.
    pub fn illustrative() -> Self {
        Self::new(crate::catalog::default_surface(), crate::catalog::illustrative_registry())
            .expect("illustrative configuration is valid")
    }

    pub fn with_scorers(mut self, semantic: Arc<dyn SemanticScorer>, factual: Arc<dyn FactualScorer>) -> Self {
        self.semantic = semantic;
        self.factual = factual;
        self
    }

    /// Rebuild from persisted parts. Records are re-linked, not re-evaluated;
    /// the queue is derived from escalated decisions and the feedback log.
    pub fn restore(
        governance: Governance,
        sources: Vec<SourceDocument>,
        evidence: Vec<DecisionEvidence>,
        log: FeedbackLog,
    ) -> Result<Self, EngineError> {
        let mut engine = Engine {
            governance,
            queue: ReviewQueue::new(),
            log,
            sources: BTreeMap::new(),
            evidence: BTreeMap::new(),
            order: Vec::new(),
            semantic: Arc::new(LexicalF1),
            factual: Arc::new(RuleBasedChecker),
        };
        for s in sources {
            engine.register_source(s)?;
        }
        for ev in evidence {
            if ev.decision.status == EscalationStatus::Escalated {
                engine.queue.enqueue(&ev.decision, ev.decision.decided_at)?;
            }
            engine.order.push(ev.artifact.artifact_id.clone());
            engine.evidence.insert(ev.artifact.artifact_id.clone(), ev);
        }
        let resolved: Vec<String> = engine.log.events().iter().map(|e| e.task_id.clone()).collect();
        for id in resolved {
            if let Some(task) = engine.queue.tasks.get_mut(&id) {
                task.state = TaskState::Resolved;
                task.claimed_by = None;
            }
        }
        Ok(engine)
    }

    pub fn governance(&self) -> &Governance {
        &self.governance
    }

    pub fn surface(&self) -> &PolicySurface {
        self.governance.current()
    }

    pub fn policy_version(&self) -> u64 {
        self.governance.policy_version()
    }

    pub fn registry(&self) -> Arc<RegistrySnapshot> {
        self.governance.registry().current()
    }

    pub fn queue(&self) -> &ReviewQueue {
        &self.queue
    }

    pub fn log(&self) -> &FeedbackLog {
        &self.log
    }

    pub fn sources(&self) -> impl Iterator<Item = &SourceDocument> {
        self.sources.values()
    }

    pub fn source(&self, id: &str) -> Result<&SourceDocument, EngineError> {
        self.sources
            .get(id)
            .ok_or_else(|| EngineError::UnknownSource(id.to_string()))
    }

    /// Evidence in submission order.
    pub fn evidence(&self) -> impl Iterator<Item = &DecisionEvidence> {
        self.order.iter().map(|id| &self.evidence[id])
    }

    pub fn evidence_for(&self, artifact_id: &str) -> Result<&DecisionEvidence, EngineError> {
        self.evidence
            .get(artifact_id)
            .ok_or_else(|| EngineError::UnknownArtifact(artifact_id.to_string()))
    }

    /// Register a source; re-registering identical content is a no-op.
    pub fn register_source(&mut self, source: SourceDocument) -> Result<(), EngineError> {
        source.validate()?;
        match self.sources.get(&source.id) {
            Some(existing) if *existing == source => Ok(()),
            Some(_) => Err(EngineError::SourceConflict(source.id)),
            None => {
                self.sources.insert(source.id.clone(), source);
                Ok(())
            }
        }
    }

    fn profile(&self, profile_id: &str) -> Result<UserProfile, EngineError> {
        Ok(self.registry().profile(profile_id)?.clone())
    }

    fn context(&self, now: Timestamp, revision_of: Option<String>) -> GenerationContext {
        GenerationContext {
            registry_version: self.governance.registry().version(),
            policy_version: self.policy_version(),
            created_at: now,
            revision_of,
        }
    }

    /// Generate from the deterministic template and decide.
    pub fn submit(&mut self, source_id: &str, profile_id: &str, now: Timestamp) -> Result<Submission, EngineError> {
        self.submit_revision(source_id, profile_id, None, now)
    }

    fn submit_revision(
        &mut self,
        source_id: &str,
        profile_id: &str,
        revision_of: Option<String>,
        now: Timestamp,
    ) -> Result<Submission, EngineError> {
        let source = self.source(source_id)?.clone();
        let profile = self.profile(profile_id)?;
        let rules = self.registry().matching_rules(&profile);
        let artifact = generate_template(&source, &profile, &rules, &self.context(now, revision_of))?;
        self.decide(artifact, &source, &profile, now)
    }

    /// Generate through an external port and decide.
    pub fn submit_external(
        &mut self,
        source_id: &str,
        profile_id: &str,
        port: &dyn GeneratorPort,
        revision: Option<&RevisionOrder>,
        now: Timestamp,
    ) -> Result<Submission, EngineError> {
        let source = self.source(source_id)?.clone();
        let profile = self.profile(profile_id)?;
        let rules = self.registry().matching_rules(&profile);
        let template = self.surface().prompt_templates.values().next().cloned();
        let ctx = self.context(now, revision.map(|r| r.artifact_id.clone()));
        let notes = revision.map(|r| r.notes.clone()).unwrap_or_default();
        let artifact = generate_external(&source, &profile, &rules, port, &ctx, notes, template)?;
        self.decide(artifact, &source, &profile, now)
    }

    /// Decide an artifact built elsewhere (for example, a hand-edited one).
    pub fn submit_artifact(&mut self, artifact: UiArtifact, now: Timestamp) -> Result<Submission, EngineError> {
        let source = self.source(&artifact.source_id)?.clone();
        let profile = self.profile(&artifact.profile_id)?;
        crate::generation::validate_artifact(&artifact).map_err(GenerationError::SchemaViolation)?;
        self.decide(artifact, &source, &profile, now)
    }

    fn decide(
        &mut self,
        artifact: UiArtifact,
        source: &SourceDocument,
        profile: &UserProfile,
        now: Timestamp,
    ) -> Result<Submission, EngineError> {
        if let Some(existing) = self.evidence.get(&artifact.artifact_id) {
            let same = UiArtifact {
                created_at: existing.artifact.created_at,
                ..artifact.clone()
            };
            if same != existing.artifact {
                return Err(EngineError::ArtifactConflict(artifact.artifact_id));
            }
            let task = self.queue.for_artifact(&artifact.artifact_id).first().map(|t| (*t).clone());
            return Ok(Submission {
                evidence: existing.clone(),
                task,
                created: false,
            });
        }
        let surface = self.governance.current();
        let registry = self.governance.registry().current();
        let scorers = Scorers {
            semantic: self.semantic.as_ref(),
            factual: self.factual.as_ref(),
        };
        let results = evaluate_artifact(&artifact, source, profile, &surface.policy, scorers);
        let safety_nodes = detect_safety_segments(&artifact, &surface.lexicon);
        let decision = decide_escalation(&results, &safety_nodes, &artifact, &surface.policy, &registry, now)?;
        let evidence = DecisionEvidence {
            artifact,
            results,
            safety_nodes,
            registry_version: registry.version,
            lexicon_version: surface.lexicon.version.clone(),
            decision,
        };
        let task = if evidence.decision.status == EscalationStatus::Escalated {
            Some(self.queue.enqueue(&evidence.decision, now)?)
        } else {
            None
        };
        let id = evidence.artifact.artifact_id.clone();
        self.order.push(id.clone());
        self.evidence.insert(id, evidence.clone());
        Ok(Submission {
            evidence,
            task,
            created: true,
        })
    }

    pub fn claim(&mut self, task_id: &str, reviewer_id: &str, role: ReviewerRole) -> Result<ReviewTask, EngineError> {
        Ok(self.queue.claim(task_id, reviewer_id, role)?)
    }

    pub fn release_claim(&mut self, task_id: &str, reviewer_id: &str) -> Result<ReviewTask, EngineError> {
        Ok(self.queue.release_claim(task_id, reviewer_id)?)
    }

    pub fn submit_decision(&mut self, input: DecisionInput, now: Timestamp) -> Result<DecisionOutcome, EngineError> {
        let task = self.queue.get(&input.task_id)?.clone();
        let evidence = self.evidence_for(&task.artifact_id)?.clone();
        let registry = self.governance.registry().current();
        let ctx = SubmitContext {
            registry: &registry,
            artifact: &evidence.artifact,
            policy_version: self.policy_version(),
            now,
        };
        let event = submit_decision(&mut self.queue, &mut self.log, input, &ctx)?;
        let profile = self.profile(&evidence.artifact.profile_id)?;
        let human = human_result(&event, &self.surface().policy, &profile);
        Ok(DecisionOutcome {
            release: self.release_state(&task.artifact_id)?,
            revision: revision_order(&event),
            human,
            event,
        })
    }

    /// Regenerate an artifact whose latest event requested a revision.
    pub fn revise(&mut self, artifact_id: &str, now: Timestamp) -> Result<Submission, EngineError> {
        let evidence = self.evidence_for(artifact_id)?;
        let requested = self
            .log
            .for_artifact(artifact_id)
            .last()
            .is_some_and(|e| e.decision == ReviewDecision::RequestRevision);
        if !requested {
            return Err(EngineError::NoRevisionRequested(artifact_id.to_string()));
        }
        let (source_id, profile_id) = (evidence.artifact.source_id.clone(), evidence.artifact.profile_id.clone());
        self.submit_revision(&source_id, &profile_id, Some(artifact_id.to_string()), now)
    }

    fn events_for(&self, artifact_id: &str) -> Vec<FeedbackEvent> {
        self.log.for_artifact(artifact_id).cloned().collect()
    }

    pub fn release_state(&self, artifact_id: &str) -> Result<ReleaseState, EngineError> {
        let evidence = self.evidence_for(artifact_id)?;
        Ok(release_gate(&evidence.decision, &self.events_for(artifact_id)))
    }

    pub fn replay(&self, artifact_id: &str) -> Result<EscalationDecision, EngineError> {
        Ok(replay_decision(self.evidence_for(artifact_id)?, &self.governance)?)
    }

    pub fn replay_all(&self) -> Vec<ReplayCheck> {
        self.evidence()
            .map(|ev| {
                let id = ev.artifact.artifact_id.clone();
                match replay_decision(ev, &self.governance) {
                    Ok(d) => ReplayCheck {
                        artifact_id: id,
                        matches: d == ev.decision,
                        error: None,
                    },
                    Err(e) => ReplayCheck {
                        artifact_id: id,
                        matches: false,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect()
    }

    pub fn compliance_report(&self, artifact_id: &str) -> Result<ComplianceDocument, EngineError> {
        let evidence = self.evidence_for(artifact_id)?;
        let events: Vec<&FeedbackEvent> = self.log.for_artifact(artifact_id).collect();
        let profile = self.profile(&evidence.artifact.profile_id)?;
        let human: Vec<CheckpointResult> = events
            .iter()
            .filter_map(|e| {
                let policy = &self.governance.at(e.policy_version).ok()?.policy;
                human_result(e, policy, &profile)
            })
            .collect();
        Ok(compliance_report(evidence, &events, &human))
    }

    fn alert_ids(&self) -> BTreeSet<String> {
        self.alerts().into_iter().map(|a| a.alert_id).collect()
    }

    /// Apply a governance action. Justifications may cite feedback events or
    /// current drift alerts.
    pub fn apply_governance(
        &mut self,
        request: ActionRequest,
        now: Timestamp,
    ) -> Result<GovernanceAction, EngineError> {
        let alerts = self.alert_ids();
        let log = &self.log;
        let resolves = |id: &str| log.get(id).is_some() || alerts.contains(id);
        Ok(self.governance.apply_action(request, &resolves, now)?)
    }

    /// Supervision inputs derived from the stored decisions and feedback.
    pub fn observations(&self) -> (Vec<ArtifactObservation>, Vec<FeedbackObservation>) {
        let registry = self.governance.registry();
        let artifacts = self
            .evidence()
            .map(|ev| {
                let snap = registry.at(ev.registry_version).unwrap_or_else(|_| registry.current());
                let mut verdicts: BTreeMap<Category, bool> = BTreeMap::new();
                for r in &ev.results {
                    for cat in snap.categories_of(r.requirement_ids.iter()) {
                        let v = verdicts.entry(cat).or_insert(true);
                        *v &= r.passed;
                    }
                }
                let source_regimen = self.sources.get(&ev.artifact.source_id).map(|s| s.regimen_kind());
                let needs = snap
                    .profile(&ev.artifact.profile_id)
                    .map(|p| p.effective_needs())
                    .unwrap_or_default();
                ArtifactObservation {
                    artifact_id: ev.artifact.artifact_id.clone(),
                    decided_at: ev.decision.decided_at,
                    status: ev.decision.status,
                    needs,
                    regimen_kind: source_regimen.unwrap_or(crate::trace::RegimenKind::SingleDrug),
                    category_verdicts: verdicts,
                }
            })
            .collect();
        let snap = registry.current();
        let feedback = self
            .log
            .events()
            .iter()
            .map(|e| FeedbackObservation {
                event_id: e.event_id.clone(),
                artifact_id: e.artifact_id.clone(),
                timestamp: e.timestamp,
                decision: e.decision,
                categories: snap.categories_of(e.requirement_ids.iter()),
            })
            .collect();
        (artifacts, feedback)
    }

    pub fn alerts(&self) -> Vec<DriftAlert> {
        let (artifacts, feedback) = self.observations();
        supervise(&artifacts, &feedback, &self.surface().drift).1
    }

    pub fn monitoring_summary(&self, from: Option<Timestamp>, to: Option<Timestamp>) -> MonitoringSummary {
        let (artifacts, feedback) = self.observations();
        monitoring_summary(&artifacts, &feedback, &self.surface().drift, from, to)
    }

    /// Chains, referential integrity and replay equality.
    pub fn verify(&self) -> AuditReport {
        let mut unresolved = BTreeMap::new();
        let mut dangling = BTreeMap::new();
        let registry = self.governance.registry();
        for ev in self.evidence() {
            let id = &ev.artifact.artifact_id;
            let snap = registry.at(ev.registry_version).unwrap_or_else(|_| registry.current());
            let artifact_reqs = ev.artifact.requirement_ids();
            let mut cited: Vec<&String> = artifact_reqs.iter().collect();
            cited.extend(ev.results.iter().flat_map(|r| r.requirement_ids.iter()));
            cited.extend(ev.decision.triggers.iter().flat_map(|t| t.requirement_ids.iter()));
            let missing = snap.unresolved(cited);
            if !missing.is_empty() {
                unresolved.insert(id.clone(), missing);
            }
            let nodes = ev.artifact.node_ids();
            let mut bad: Vec<String> = ev
                .results
                .iter()
                .flat_map(|r| r.ui_node_ids.iter())
                .chain(ev.decision.triggers.iter().flat_map(|t| t.ui_node_ids.iter()))
                .chain(ev.safety_nodes.iter())
                .filter(|n| !nodes.contains(*n))
                .cloned()
                .collect();
            bad.sort();
            bad.dedup();
            if !bad.is_empty() {
                dangling.insert(id.clone(), bad);
            }
        }
        let snap = registry.current();
        for e in self.log.events() {
            let missing = snap.unresolved(e.requirement_ids.iter());
            if !missing.is_empty() {
                unresolved.insert(e.event_id.clone(), missing);
            }
            match self.evidence.get(&e.artifact_id) {
                Some(ev) => {
                    let nodes = ev.artifact.node_ids();
                    let bad: Vec<String> = e.ui_node_ids.iter().filter(|n| !nodes.contains(*n)).cloned().collect();
                    if !bad.is_empty() {
                        dangling.insert(e.event_id.clone(), bad);
                    }
                }
                None => {
                    dangling.insert(e.event_id.clone(), vec![e.artifact_id.clone()]);
                }
            }
        }
        AuditReport {
            feedback_chain: self.log.verify(),
            governance_chain: self.governance.verify(),
            unresolved_requirements: unresolved,
            dangling_nodes: dangling,
            replay: self.replay_all(),
            artifacts: self.order.len(),
        }
    }
}
