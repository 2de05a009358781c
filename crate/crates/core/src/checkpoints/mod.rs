//! Automated checkpoints R, S and F and safety-segment detection.
//!
//! Results are risk indicators for the escalation policy; nothing here decides
//! release. A scorer failure yields a failed result carrying the error, and
//! the remaining checkpoints are still evaluated.

pub mod factual;
pub mod readability;
pub mod safety;
pub mod semantic;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::catalog::ids;
use crate::escalation::{PolicyConfig, ReviewerRole};
use crate::generation::{PortError, UiArtifact};
use crate::review::ReviewDecision;
use crate::trace::{SourceDocument, UserProfile};

use factual::{ConsistencyFinding, FactualReport, FactualScorer, RuleBasedChecker};
use readability::{ReadabilityWarning, TextCounts};
use semantic::{LexicalF1, SemanticScorer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Checkpoint {
    R,
    S,
    F,
    H,
}

impl Checkpoint {
    pub fn as_str(self) -> &'static str {
        match self {
            Checkpoint::R => "R",
            Checkpoint::S => "S",
            Checkpoint::F => "F",
            Checkpoint::H => "H",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<=")]
    Le,
}

impl Comparator {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Ge => value >= threshold,
            Comparator::Le => value <= threshold,
        }
    }

    /// True when `a` is at least as demanding as `b`.
    pub fn stricter(self, a: f64, b: f64) -> bool {
        match self {
            Comparator::Ge => a >= b,
            Comparator::Le => a <= b,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Ge => ">=",
            Comparator::Le => "<=",
        }
    }
}

/// Which readability index the R threshold binds to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadabilityIndex {
    FernandezHuerta,
    SzigrisztPazos,
}

impl ReadabilityIndex {
    pub fn metric_name(self) -> &'static str {
        match self {
            ReadabilityIndex::FernandezHuerta => "fernandez_huerta",
            ReadabilityIndex::SzigrisztPazos => "szigriszt_pazos",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CheckpointDetail {
    Readability {
        fernandez_huerta: f64,
        szigriszt_pazos: f64,
        index: ReadabilityIndex,
        counts: TextCounts,
        syllabifier: String,
        tokenizer: String,
        #[serde(default)]
        warnings: Vec<ReadabilityWarning>,
    },
    Semantic {
        scorer: String,
        breakdown: Value,
    },
    Factual {
        scorer: String,
        slots: usize,
        critical: usize,
        findings: Vec<ConsistencyFinding>,
    },
    Human {
        event_id: String,
        reviewer_role: ReviewerRole,
        decision: ReviewDecision,
        comment: String,
    },
    Error {
        code: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointResult {
    pub checkpoint: Checkpoint,
    pub metric_name: String,
    /// Absent when the scorer failed.
    pub value: Option<f64>,
    pub threshold: f64,
    pub comparator: Comparator,
    pub passed: bool,
    pub ui_node_ids: Vec<String>,
    pub requirement_ids: Vec<String>,
    pub detail: CheckpointDetail,
}

impl CheckpointResult {
    pub fn new(
        checkpoint: Checkpoint,
        metric_name: impl Into<String>,
        value: Option<f64>,
        threshold: f64,
        comparator: Comparator,
        ui_node_ids: Vec<String>,
        requirement_ids: Vec<String>,
        detail: CheckpointDetail,
    ) -> Self {
        CheckpointResult {
            checkpoint,
            metric_name: metric_name.into(),
            value,
            threshold,
            comparator,
            passed: passes(value, threshold, comparator),
            ui_node_ids,
            requirement_ids,
            detail,
        }
    }

    /// Critical factual findings carried by an F result.
    pub fn critical_findings(&self) -> Vec<&ConsistencyFinding> {
        match &self.detail {
            CheckpointDetail::Factual { findings, .. } => findings
                .iter()
                .filter(|f| f.severity == factual::Severity::Critical)
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn is_error(&self) -> bool {
        matches!(self.detail, CheckpointDetail::Error { .. })
    }
}

/// The pass flag as a pure function of value, threshold and comparator.
pub fn passes(value: Option<f64>, threshold: f64, comparator: Comparator) -> bool {
    value.is_some_and(|v| v.is_finite() && comparator.holds(v, threshold))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScorerError {
    #[error("text is empty after normalization")]
    EmptyText,
    #[error("artifact source {artifact_source} does not match source {source_id}")]
    SourceMismatch { artifact_source: String, source_id: String },
    #[error("scorer unavailable: {0}")]
    Unavailable(String),
    #[error("invalid scorer response: {0}")]
    InvalidResponse(String),
    #[error("no threshold configured for {0}")]
    MissingThreshold(String),
}

impl ScorerError {
    pub fn code(&self) -> &'static str {
        match self {
            ScorerError::EmptyText => "EMPTY_TEXT",
            ScorerError::SourceMismatch { .. } => "SOURCE_MISMATCH",
            ScorerError::Unavailable(_) => "SCORER_UNAVAILABLE",
            ScorerError::InvalidResponse(_) => "SCORER_INVALID_RESPONSE",
            ScorerError::MissingThreshold(_) => "MISSING_THRESHOLD",
        }
    }
}

impl From<readability::ReadabilityError> for ScorerError {
    fn from(e: readability::ReadabilityError) -> Self {
        match e {
            readability::ReadabilityError::EmptyText => ScorerError::EmptyText,
        }
    }
}

/// Lowercase, strip acute accents and diaeresis (keeping ñ), collapse
/// whitespace.
pub fn fold(text: &str) -> String {
    let mapped: String = text
        .to_lowercase()
        .chars()
        .map(|c| match c {
            'á' | 'à' | 'â' | 'ä' => 'a',
            'é' | 'è' | 'ê' | 'ë' => 'e',
            'í' | 'ì' | 'î' | 'ï' => 'i',
            'ó' | 'ò' | 'ô' | 'ö' => 'o',
            'ú' | 'ù' | 'û' | 'ü' => 'u',
            other => other,
        })
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Scorers used by one evaluation.
#[derive(Clone, Copy)]
pub struct Scorers<'a> {
    pub semantic: &'a dyn SemanticScorer,
    pub factual: &'a dyn FactualScorer,
}

static LEXICAL_F1: LexicalF1 = LexicalF1;
static RULE_CHECKER: RuleBasedChecker = RuleBasedChecker;

impl Scorers<'static> {
    /// The deterministic lexical and rule-based scorers.
    pub fn reference() -> Self {
        Scorers {
            semantic: &LEXICAL_F1,
            factual: &RULE_CHECKER,
        }
    }
}

impl Default for Scorers<'static> {
    fn default() -> Self {
        Self::reference()
    }
}

fn error_result(
    checkpoint: Checkpoint,
    metric: &str,
    threshold: f64,
    comparator: Comparator,
    requirement_ids: Vec<String>,
    err: &ScorerError,
) -> CheckpointResult {
    CheckpointResult::new(
        checkpoint,
        metric,
        None,
        threshold,
        comparator,
        Vec::new(),
        requirement_ids,
        CheckpointDetail::Error {
            code: err.code().to_string(),
            message: err.to_string(),
        },
    )
}

/// Evaluate R, S and F for one artifact.
pub fn evaluate_artifact(
    artifact: &UiArtifact,
    source: &SourceDocument,
    profile: &UserProfile,
    policy: &PolicyConfig,
    scorers: Scorers<'_>,
) -> Vec<CheckpointResult> {
    let text = artifact.plain_text();
    let text_nodes = artifact.text_node_ids();
    vec![
        evaluate_readability(&text, &text_nodes, profile, policy),
        evaluate_semantic(&text, &text_nodes, source, profile, policy, scorers.semantic),
        evaluate_factual(artifact, source, profile, policy, scorers.factual),
    ]
}

fn evaluate_readability(
    text: &str,
    text_nodes: &[String],
    profile: &UserProfile,
    policy: &PolicyConfig,
) -> CheckpointResult {
    let index = policy.readability_index;
    let reqs = vec![ids::READABILITY.to_string()];
    let Some((threshold, comparator)) = policy.threshold_for(Checkpoint::R, profile) else {
        let err = ScorerError::MissingThreshold("R".into());
        return error_result(Checkpoint::R, index.metric_name(), f64::NAN, Comparator::Ge, reqs, &err);
    };
    match readability::score_readability(text, &profile.language) {
        Ok(score) => {
            let value = match index {
                ReadabilityIndex::FernandezHuerta => score.fernandez_huerta,
                ReadabilityIndex::SzigrisztPazos => score.szigriszt_pazos,
            };
            CheckpointResult::new(
                Checkpoint::R,
                index.metric_name(),
                Some(value),
                threshold,
                comparator,
                text_nodes.to_vec(),
                reqs,
                CheckpointDetail::Readability {
                    fernandez_huerta: score.fernandez_huerta,
                    szigriszt_pazos: score.szigriszt_pazos,
                    index,
                    counts: score.counts,
                    syllabifier: readability::SYLLABIFIER_VERSION.into(),
                    tokenizer: readability::TOKENIZER_VERSION.into(),
                    warnings: score.warnings,
                },
            )
        }
        Err(e) => error_result(Checkpoint::R, index.metric_name(), threshold, comparator, reqs, &e.into()),
    }
}

fn evaluate_semantic(
    text: &str,
    text_nodes: &[String],
    source: &SourceDocument,
    profile: &UserProfile,
    policy: &PolicyConfig,
    scorer: &dyn SemanticScorer,
) -> CheckpointResult {
    let reqs = vec![ids::SEMANTIC.to_string()];
    let metric = scorer.name().to_string();
    let Some((threshold, comparator)) = policy.threshold_for(Checkpoint::S, profile) else {
        let err = ScorerError::MissingThreshold("S".into());
        return error_result(Checkpoint::S, &metric, f64::NAN, Comparator::Ge, reqs, &err);
    };
    match scorer.score(&source.text, text) {
        Ok(s) => CheckpointResult::new(
            Checkpoint::S,
            metric.clone(),
            Some(s.value),
            threshold,
            comparator,
            text_nodes.to_vec(),
            reqs,
            CheckpointDetail::Semantic {
                scorer: metric,
                breakdown: s.detail,
            },
        ),
        Err(e) => error_result(Checkpoint::S, &metric, threshold, comparator, reqs, &e),
    }
}

fn evaluate_factual(
    artifact: &UiArtifact,
    source: &SourceDocument,
    profile: &UserProfile,
    policy: &PolicyConfig,
    scorer: &dyn FactualScorer,
) -> CheckpointResult {
    let metric = scorer.name().to_string();
    let Some((threshold, comparator)) = policy.threshold_for(Checkpoint::F, profile) else {
        let err = ScorerError::MissingThreshold("F".into());
        return error_result(Checkpoint::F, &metric, f64::NAN, Comparator::Ge, vec![ids::FACTUAL.into()], &err);
    };
    match scorer.check(artifact, source) {
        Ok(report) => factual_result(metric, threshold, comparator, report),
        Err(e) => error_result(Checkpoint::F, &metric, threshold, comparator, vec![ids::FACTUAL.into()], &e),
    }
}

fn factual_result(metric: String, threshold: f64, comparator: Comparator, report: FactualReport) -> CheckpointResult {
    let reqs = [ids::FACTUAL, ids::DOSE, ids::TIMING, ids::ROUTE, ids::WARNINGS]
        .map(String::from)
        .to_vec();
    let mut nodes: Vec<String> = Vec::new();
    for id in report.findings.iter().filter_map(|f| f.ui_node_id.clone()) {
        if !nodes.contains(&id) {
            nodes.push(id);
        }
    }
    let critical = report.critical();
    CheckpointResult::new(
        Checkpoint::F,
        metric.clone(),
        Some(report.score),
        threshold,
        comparator,
        nodes,
        reqs,
        CheckpointDetail::Factual {
            scorer: metric,
            slots: report.slots,
            critical,
            findings: report.findings,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Semantic,
    Factual,
}

/// Wire request for a remote scorer service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerRequest {
    pub kind: ScorerKind,
    pub source: Value,
    pub generated: Value,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerResponse {
    pub value: f64,
    #[serde(default)]
    pub detail: Value,
}

/// Transport for remote scorers. Returns the raw response body.
pub trait ScorerPort: Send + Sync {
    fn call(&self, request: &ScorerRequest) -> Result<String, PortError>;
}

fn call_port(port: &dyn ScorerPort, request: &ScorerRequest) -> Result<ScorerResponse, ScorerError> {
    let body = port.call(request).map_err(|e| ScorerError::Unavailable(e.to_string()))?;
    let response: ScorerResponse =
        serde_json::from_str(&body).map_err(|e| ScorerError::InvalidResponse(e.to_string()))?;
    if !response.value.is_finite() || !(0.0..=1.0).contains(&response.value) {
        return Err(ScorerError::InvalidResponse(format!("value {} outside [0, 1]", response.value)));
    }
    Ok(response)
}

/// Semantic scorer backed by a remote service.
pub struct RemoteSemantic<P> {
    pub port: P,
    pub name: String,
    pub version: String,
}

impl<P: ScorerPort> SemanticScorer for RemoteSemantic<P> {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, source: &str, generated: &str) -> Result<semantic::SemanticScore, ScorerError> {
        if source.trim().is_empty() || generated.trim().is_empty() {
            return Err(ScorerError::EmptyText);
        }
        let response = call_port(
            &self.port,
            &ScorerRequest {
                kind: ScorerKind::Semantic,
                source: json!(source),
                generated: json!(generated),
                version: self.version.clone(),
            },
        )?;
        Ok(semantic::SemanticScore {
            value: response.value,
            detail: response.detail,
        })
    }
}

/// Factual scorer backed by a remote service. Findings in the response
/// detail are parsed strictly.
pub struct RemoteFactual<P> {
    pub port: P,
    pub name: String,
    pub version: String,
}

impl<P: ScorerPort> FactualScorer for RemoteFactual<P> {
    fn name(&self) -> &str {
        &self.name
    }

    fn check(&self, artifact: &UiArtifact, source: &SourceDocument) -> Result<FactualReport, ScorerError> {
        if artifact.source_id != source.id {
            return Err(ScorerError::SourceMismatch {
                artifact_source: artifact.source_id.clone(),
                source_id: source.id.clone(),
            });
        }
        let response = call_port(
            &self.port,
            &ScorerRequest {
                kind: ScorerKind::Factual,
                source: serde_json::to_value(source).expect("source serializes"),
                generated: serde_json::to_value(artifact).expect("artifact serializes"),
                version: self.version.clone(),
            },
        )?;
        let findings = match response.detail.get("findings") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| ScorerError::InvalidResponse(e.to_string()))?,
            None => Vec::new(),
        };
        let slots = response.detail.get("slots").and_then(Value::as_u64).unwrap_or(0) as usize;
        Ok(FactualReport {
            score: response.value,
            findings,
            slots,
        })
    }
}
