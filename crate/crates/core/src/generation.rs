//! Structured UI artifacts and the two generator routes: a deterministic
//! template generator and a validated client contract for an external
//! generator service.
//!
//! Whatever route produced it, an artifact only moves on after
//! [`validate_artifact`] accepts it. Invalid responses are rejected whole.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::catalog::ids;
use crate::digest::{short_id, to_canonical};
use crate::trace::{AdaptationRule, Directive, DoseUnit, MedicationRecord, Route, SourceDocument, UserProfile};
use crate::Timestamp;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerationError {
    #[error("rule conflict between {rule} and {other}: {reason}")]
    RuleConflict {
        rule: String,
        other: String,
        reason: String,
    },
    #[error("rule {0} does not match the profile")]
    RuleMismatch(String),
    #[error("invalid source document: {0}")]
    InvalidSource(String),
    #[error("generator unavailable: {0}")]
    GeneratorUnavailable(String),
    #[error("schema violation: {}", .0.join("; "))]
    SchemaViolation(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Heading,
    Section,
    Step,
    Warning,
    PictogramSlot,
    ThemeToken,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UiNode {
    pub node_id: String,
    pub kind: NodeKind,
    pub text: String,
    pub order: u32,
    pub requirement_ids: Vec<String>,
    pub safety_critical: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<UiNode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Template,
    ExternalLlm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UiArtifact {
    pub artifact_id: String,
    pub profile_id: String,
    pub source_id: String,
    pub nodes: Vec<UiNode>,
    pub generator: GeneratorKind,
    pub generator_confidence: Option<f64>,
    pub created_at: Timestamp,
    pub policy_version: u64,
    pub registry_version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision_of: Option<String>,
}

/// A node visited in pre-order, with the id of its parent.
#[derive(Debug, Clone, Copy)]
pub struct NodeRef<'a> {
    pub node: &'a UiNode,
    pub parent: Option<&'a str>,
    pub depth: usize,
}

impl UiArtifact {
    /// Pre-order traversal.
    pub fn walk(&self) -> Vec<NodeRef<'_>> {
        fn visit<'a>(node: &'a UiNode, parent: Option<&'a str>, depth: usize, out: &mut Vec<NodeRef<'a>>) {
            out.push(NodeRef { node, parent, depth });
            for child in &node.children {
                visit(child, Some(&node.node_id), depth + 1, out);
            }
        }
        let mut out = Vec::new();
        for root in &self.nodes {
            visit(root, None, 0, &mut out);
        }
        out
    }

    pub fn node(&self, id: &str) -> Option<&UiNode> {
        self.walk().into_iter().find(|r| r.node.node_id == id).map(|r| r.node)
    }

    pub fn node_ids(&self) -> BTreeSet<String> {
        self.walk().iter().map(|r| r.node.node_id.clone()).collect()
    }

    pub fn requirement_ids(&self) -> BTreeSet<String> {
        self.walk()
            .iter()
            .flat_map(|r| r.node.requirement_ids.iter().cloned())
            .collect()
    }

    /// Ids of nodes that carry user-visible text.
    pub fn text_node_ids(&self) -> Vec<String> {
        self.walk()
            .iter()
            .filter(|r| !r.node.text.trim().is_empty())
            .map(|r| r.node.node_id.clone())
            .collect()
    }

    /// The artifact's visible text, one sentence-terminated line per node.
    pub fn plain_text(&self) -> String {
        let mut parts = Vec::new();
        for r in self.walk() {
            let text = r.node.text.trim();
            if text.is_empty() {
                continue;
            }
            if text.ends_with(['.', '!', '?', '…']) {
                parts.push(text.to_string());
            } else {
                parts.push(format!("{text}."));
            }
        }
        parts.join(" ")
    }
}

/// Structural validation. Every violation is reported; nothing is repaired.
pub fn validate_artifact(artifact: &UiArtifact) -> Result<(), Vec<String>> {
    let mut violations = Vec::new();
    if artifact.artifact_id.trim().is_empty() {
        violations.push("artifact_id is empty".to_string());
    }
    if artifact.profile_id.trim().is_empty() || artifact.source_id.trim().is_empty() {
        violations.push("profile_id and source_id are required".to_string());
    }
    match artifact.nodes.len() {
        0 => violations.push("node tree is empty".to_string()),
        1 => {}
        n => violations.push(format!("expected exactly one root node, found {n}")),
    }
    if let Some(c) = artifact.generator_confidence {
        if !(c.is_finite() && (0.0..=1.0).contains(&c)) {
            violations.push(format!("generator_confidence {c} outside [0,1]"));
        }
    }
    let mut seen = BTreeSet::new();
    for r in artifact.walk() {
        let node = r.node;
        if node.node_id.trim().is_empty() {
            violations.push("node with empty node_id".to_string());
        } else if !seen.insert(node.node_id.as_str()) {
            violations.push(format!("duplicate node_id {}", node.node_id));
        }
        let text_optional = matches!(node.kind, NodeKind::PictogramSlot | NodeKind::ThemeToken);
        if !text_optional && node.text.trim().is_empty() {
            violations.push(format!("node {} ({:?}) has empty text", node.node_id, node.kind));
        }
        if node.kind == NodeKind::Warning && !node.safety_critical {
            violations.push(format!("warning node {} is not safety_critical", node.node_id));
        }
        let mut orders = BTreeSet::new();
        for child in &node.children {
            if !orders.insert(child.order) {
                violations.push(format!(
                    "children of {} share order {}",
                    node.node_id, child.order
                ));
            }
        }
        if node.requirement_ids.iter().any(|id| id.trim().is_empty()) {
            violations.push(format!("node {} cites an empty requirement id", node.node_id));
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Generation-time context pinned into the artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationContext {
    pub registry_version: u64,
    pub policy_version: u64,
    pub created_at: Timestamp,
    pub revision_of: Option<String>,
}

/// Directives in force after priority resolution, with the requirement ids of
/// the rules that contributed each one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResolvedDirectives {
    pub directives: BTreeMap<Directive, Vec<String>>,
}

impl ResolvedDirectives {
    pub fn has(&self, d: Directive) -> bool {
        self.directives.contains_key(&d)
    }

    fn reqs(&self, d: Directive) -> Vec<String> {
        self.directives.get(&d).cloned().unwrap_or_default()
    }

    pub fn list(&self) -> Vec<Directive> {
        self.directives.keys().copied().collect()
    }
}

/// Combine matched rules. For each conflicting directive pair the side held
/// by the higher-priority rule wins; a tie is a [`GenerationError::RuleConflict`].
pub fn resolve_directives(
    profile: &UserProfile,
    rules: &[AdaptationRule],
) -> Result<ResolvedDirectives, GenerationError> {
    for rule in rules {
        if !rule.profile_predicate.matches(profile) {
            return Err(GenerationError::RuleMismatch(rule.id.clone()));
        }
    }
    let holders = |d: Directive| -> Vec<&AdaptationRule> {
        rules.iter().filter(|r| r.actions.contains(&d)).collect()
    };
    let mut dropped = BTreeSet::new();
    for (a, b) in Directive::CONFLICTS {
        let (ha, hb) = (holders(a), holders(b));
        if ha.is_empty() || hb.is_empty() {
            continue;
        }
        fn top<'r>(h: &[&'r AdaptationRule]) -> &'r AdaptationRule {
            h.iter().copied().max_by_key(|r| r.priority).expect("nonempty")
        }
        let (ta, tb) = (top(&ha), top(&hb));
        match ta.priority.cmp(&tb.priority) {
            std::cmp::Ordering::Equal => {
                return Err(GenerationError::RuleConflict {
                    rule: ta.id.clone(),
                    other: tb.id.clone(),
                    reason: format!("{a:?} vs {b:?} at priority {}", ta.priority),
                })
            }
            std::cmp::Ordering::Greater => {
                dropped.insert(b);
            }
            std::cmp::Ordering::Less => {
                dropped.insert(a);
            }
        }
    }
    let mut resolved = ResolvedDirectives::default();
    for rule in rules {
        for &d in &rule.actions {
            if dropped.contains(&d) {
                continue;
            }
            let reqs = resolved.directives.entry(d).or_default();
            for id in &rule.requirement_ids {
                if !reqs.contains(id) {
                    reqs.push(id.clone());
                }
            }
        }
    }
    Ok(resolved)
}

/// Spanish decimal rendering: shortest round-trip digits, comma separator.
pub fn format_number(value: f64) -> String {
    format!("{value}").replace('.', ",")
}

pub fn dose_phrase(med: &MedicationRecord) -> String {
    let unit = match med.dose_unit {
        DoseUnit::Mg => "mg",
        DoseUnit::Ml => "ml",
        DoseUnit::G => "g",
        DoseUnit::Iu => "UI",
        DoseUnit::Tablet if med.dose_value == 1.0 => "comprimido",
        DoseUnit::Tablet => "comprimidos",
    };
    format!("{} {unit}", format_number(med.dose_value))
}

pub fn frequency_phrase(per_day: u32) -> String {
    if per_day == 1 {
        "1 vez al día".to_string()
    } else {
        format!("{per_day} veces al día")
    }
}

pub fn route_term(route: Route) -> &'static str {
    match route {
        Route::Oral => "oral",
        Route::Topical => "tópica",
        Route::Inhaled => "inhalada",
        Route::Injection => "inyectable",
    }
}

pub fn route_phrase(route: Route) -> String {
    format!("por vía {}", route_term(route))
}

fn node(id: String, kind: NodeKind, text: String, order: u32, reqs: Vec<String>) -> UiNode {
    UiNode {
        node_id: id,
        safety_critical: kind == NodeKind::Warning,
        kind,
        text,
        order,
        requirement_ids: dedup(reqs),
        children: Vec::new(),
    }
}

fn dedup(ids: Vec<String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for id in ids {
        if !out.contains(&id) {
            out.push(id);
        }
    }
    out
}

fn with(mut base: Vec<String>, extra: &[String]) -> Vec<String> {
    base.extend(extra.iter().cloned());
    base
}

/// Deterministic template generator.
///
/// Node ids are derived from content paths (`n-root.med0.step1`) so that a
/// rule change that adds or removes pictogram slots leaves step and warning
/// ids untouched.
pub fn generate_template(
    source: &SourceDocument,
    profile: &UserProfile,
    rules: &[AdaptationRule],
    ctx: &GenerationContext,
) -> Result<UiArtifact, GenerationError> {
    source
        .validate()
        .map_err(|e| GenerationError::InvalidSource(e.to_string()))?;
    let resolved = resolve_directives(profile, rules)?;
    let simple = resolved.has(Directive::SimplifyLanguage);
    let stepwise = resolved.has(Directive::StepwiseStructure);
    let pictograms = resolved.has(Directive::InsertPictogramSlot);
    let plain_reqs = resolved.reqs(Directive::SimplifyLanguage);
    let step_reqs = resolved.reqs(Directive::StepwiseStructure);

    let title = if simple {
        "Cómo tomar sus medicamentos"
    } else {
        "Instrucciones de administración de la medicación"
    };
    let mut root = node(
        "n-root".into(),
        NodeKind::Heading,
        title.into(),
        0,
        with(vec![ids::STRUCTURE.into()], &plain_reqs),
    );
    let mut order = 0u32;
    let mut next_order = || {
        order += 1;
        order
    };

    if resolved.has(Directive::HighContrastTheme) {
        root.children.push(node(
            "n-root.theme".into(),
            NodeKind::ThemeToken,
            String::new(),
            next_order(),
            resolved.reqs(Directive::HighContrastTheme),
        ));
    }

    for (i, med) in source.medications.iter().enumerate() {
        let base = format!("n-root.med{i}");
        let mut section = node(
            base.clone(),
            NodeKind::Section,
            med.drug_name.clone(),
            next_order(),
            vec![ids::STRUCTURE.into()],
        );
        let name = &med.drug_name;
        let dose = dose_phrase(med);
        let freq = frequency_phrase(med.frequency_per_day);
        let route = route_phrase(med.route);

        let steps: Vec<(String, Vec<String>)> = if stepwise {
            let texts = if simple {
                [
                    format!("Tome {dose} de {name}."),
                    format!("Tome {name} {freq}."),
                    format!("Tome {name} {route}."),
                ]
            } else {
                [
                    format!("Administre una dosis de {dose} de {name}."),
                    format!("Repita la administración de {name} {freq}."),
                    format!("La administración de {name} se realiza {route}."),
                ]
            };
            let fact = [ids::DOSE, ids::TIMING, ids::ROUTE];
            texts
                .into_iter()
                .zip(fact)
                .map(|(t, f)| {
                    let reqs = with(with(vec![f.into(), ids::FACTUAL.into()], &step_reqs), &plain_reqs);
                    (t, reqs)
                })
                .collect()
        } else {
            let verb = if simple { "Tome" } else { "Administre" };
            let reqs = with(
                vec![ids::DOSE.into(), ids::TIMING.into(), ids::ROUTE.into(), ids::FACTUAL.into()],
                &plain_reqs,
            );
            vec![(format!("{verb} {dose} de {name} {route}, {freq}."), reqs)]
        };

        let mut order_in_section = 0u32;
        let mut next = || {
            order_in_section += 1;
            order_in_section
        };
        for (j, (text, reqs)) in steps.into_iter().enumerate() {
            section
                .children
                .push(node(format!("{base}.step{j}"), NodeKind::Step, text, next(), reqs));
            if pictograms {
                section.children.push(node(
                    format!("{base}.pict{j}"),
                    NodeKind::PictogramSlot,
                    String::new(),
                    next(),
                    resolved.reqs(Directive::InsertPictogramSlot),
                ));
            }
        }
        for (k, warning) in med.warnings.iter().enumerate() {
            section.children.push(node(
                format!("{base}.warn{k}"),
                NodeKind::Warning,
                warning.clone(),
                next(),
                vec![ids::WARNINGS.into()],
            ));
        }
        root.children.push(section);
    }

    let rule_keys: Vec<Value> = rules.iter().map(|r| json!([r.id, r.version])).collect();
    let artifact_id = short_id(
        "art",
        &json!({
            "generator": "template",
            "source_id": source.id,
            "profile_id": profile.id,
            "registry_version": ctx.registry_version,
            "policy_version": ctx.policy_version,
            "rules": rule_keys,
            "revision_of": ctx.revision_of,
        }),
    );
    let artifact = UiArtifact {
        artifact_id,
        profile_id: profile.id.clone(),
        source_id: source.id.clone(),
        nodes: vec![root],
        generator: GeneratorKind::Template,
        // The template route is deterministic and has no sampling uncertainty.
        generator_confidence: Some(1.0),
        created_at: ctx.created_at,
        policy_version: ctx.policy_version,
        registry_version: ctx.registry_version,
        revision_of: ctx.revision_of.clone(),
    };
    validate_artifact(&artifact).map_err(GenerationError::SchemaViolation)?;
    Ok(artifact)
}

/// Versioned prompt template routed to the external generator as opaque text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub version: u32,
    pub text: String,
}

/// Request body sent to an external generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRequest {
    pub source_id: String,
    pub source_text: String,
    pub medications: Vec<MedicationRecord>,
    pub profile: UserProfile,
    pub directives: Vec<Directive>,
    /// Free-text revision notes from a reviewer's `request_revision`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub revision_notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_template: Option<PromptTemplate>,
    pub schema_version: u32,
}

/// Response body expected from an external generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorResponse {
    pub artifact: Value,
    #[serde(default)]
    pub confidence: Option<f64>,
}

/// Artifact as received on the wire. Engine-stamped metadata is optional and
/// ignored; structure is strict.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireArtifact {
    #[serde(default)]
    #[allow(dead_code)]
    artifact_id: Option<String>,
    profile_id: String,
    source_id: String,
    nodes: Vec<UiNode>,
    #[serde(default)]
    #[allow(dead_code)]
    generator: Option<GeneratorKind>,
    #[serde(default)]
    generator_confidence: Option<f64>,
    #[serde(default)]
    #[allow(dead_code)]
    created_at: Option<Value>,
    #[serde(default)]
    #[allow(dead_code)]
    policy_version: Option<u64>,
    #[serde(default)]
    #[allow(dead_code)]
    registry_version: Option<u64>,
    #[serde(default)]
    #[allow(dead_code)]
    revision_of: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PortError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("timed out")]
    Timeout,
}

/// Client side of the external generator service. Implementations return the
/// raw response body; parsing and validation happen here, not in the port.
pub trait GeneratorPort {
    fn generate(&self, request: &GeneratorRequest) -> Result<String, PortError>;
}

pub fn build_request(
    source: &SourceDocument,
    profile: &UserProfile,
    directives: &ResolvedDirectives,
    revision_notes: Vec<String>,
    prompt_template: Option<PromptTemplate>,
) -> GeneratorRequest {
    GeneratorRequest {
        source_id: source.id.clone(),
        source_text: source.text.clone(),
        medications: source.medications.clone(),
        profile: profile.clone(),
        directives: directives.list(),
        revision_notes,
        prompt_template,
        schema_version: SCHEMA_VERSION,
    }
}

/// Generate through an external port and validate the result.
pub fn generate_external(
    source: &SourceDocument,
    profile: &UserProfile,
    rules: &[AdaptationRule],
    port: &dyn GeneratorPort,
    ctx: &GenerationContext,
    revision_notes: Vec<String>,
    prompt_template: Option<PromptTemplate>,
) -> Result<UiArtifact, GenerationError> {
    source
        .validate()
        .map_err(|e| GenerationError::InvalidSource(e.to_string()))?;
    let resolved = resolve_directives(profile, rules)?;
    let request = build_request(source, profile, &resolved, revision_notes, prompt_template);
    let body = port
        .generate(&request)
        .map_err(|e| GenerationError::GeneratorUnavailable(e.to_string()))?;
    parse_response(&body, source, profile, ctx)
}

/// Parse and validate an external generator response body.
pub fn parse_response(
    body: &str,
    source: &SourceDocument,
    profile: &UserProfile,
    ctx: &GenerationContext,
) -> Result<UiArtifact, GenerationError> {
    let schema = |msg: String| GenerationError::SchemaViolation(vec![msg]);
    let response: GeneratorResponse =
        serde_json::from_str(body).map_err(|e| schema(format!("response: {e}")))?;
    let wire: WireArtifact = serde_json::from_value(response.artifact.clone())
        .map_err(|e| schema(format!("artifact: {e}")))?;
    let mut violations = Vec::new();
    if wire.profile_id != profile.id {
        violations.push(format!("profile_id {} does not match {}", wire.profile_id, profile.id));
    }
    if wire.source_id != source.id {
        violations.push(format!("source_id {} does not match {}", wire.source_id, source.id));
    }
    let confidence = response.confidence.or(wire.generator_confidence);
    let artifact_id = short_id(
        "art",
        &json!({
            "generator": "external_llm",
            "response": to_canonical(&response),
            "registry_version": ctx.registry_version,
            "policy_version": ctx.policy_version,
            "revision_of": ctx.revision_of,
        }),
    );
    let artifact = UiArtifact {
        artifact_id,
        profile_id: wire.profile_id,
        source_id: wire.source_id,
        nodes: wire.nodes,
        generator: GeneratorKind::ExternalLlm,
        generator_confidence: confidence,
        created_at: ctx.created_at,
        policy_version: ctx.policy_version,
        registry_version: ctx.registry_version,
        revision_of: ctx.revision_of.clone(),
    };
    if let Err(mut v) = validate_artifact(&artifact) {
        violations.append(&mut v);
    }
    if violations.is_empty() {
        Ok(artifact)
    } else {
        Err(GenerationError::SchemaViolation(violations))
    }
}
