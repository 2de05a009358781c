//! Checkpoint F: factual consistency of generated text against structured
//! medication records.
//!
//! For each medication the checker finds the nodes that talk about it (any
//! node naming the drug, plus that node's subtree) and scans their text for
//! dose expressions, frequency expressions, and route terms. A stated value
//! that differs from the record is a contradiction; a fact that is never
//! stated is an omission. Warnings are looked up in the medication's nodes and
//! in nodes no medication claims.
//!
//! Score: `1 - critical / slots`, floored at 0, with `3 + warnings` slots per
//! medication.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::catalog::ids;
use crate::generation::{dose_phrase, frequency_phrase, route_term, NodeKind, UiArtifact};
use crate::trace::{DoseUnit, MedicationRecord, Route, SourceDocument};

use super::{fold, ScorerError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    Contradiction,
    Omission,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactField {
    Dose,
    Frequency,
    Route,
    Warning,
}

impl FactField {
    pub fn requirement_id(self) -> &'static str {
        match self {
            FactField::Dose => ids::DOSE,
            FactField::Frequency => ids::TIMING,
            FactField::Route => ids::ROUTE,
            FactField::Warning => ids::WARNINGS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Critical,
    Warn,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyFinding {
    pub kind: FindingKind,
    pub field: FactField,
    pub expected: String,
    #[serde(default)]
    pub found: Option<String>,
    #[serde(default)]
    pub ui_node_id: Option<String>,
    pub severity: Severity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactualReport {
    pub score: f64,
    pub findings: Vec<ConsistencyFinding>,
    pub slots: usize,
}

impl FactualReport {
    pub fn critical(&self) -> usize {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Critical)
            .count()
    }
}

pub trait FactualScorer: Send + Sync {
    fn name(&self) -> &str;
    fn check(&self, artifact: &UiArtifact, source: &SourceDocument) -> Result<FactualReport, ScorerError>;
}

/// Rule-based reference checker.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBasedChecker;

impl FactualScorer for RuleBasedChecker {
    fn name(&self) -> &str {
        "rule_consistency"
    }

    fn check(&self, artifact: &UiArtifact, source: &SourceDocument) -> Result<FactualReport, ScorerError> {
        check_factual_consistency(artifact, source)
    }
}

static DOSE_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(\d+(?:[.,]\d+)?)\s*(mg|ml|g|ui|iu|comprimidos?|tabletas?)\b").expect("dose pattern")
});

static FREQ_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"\b(\d+|una|un|dos|tres|cuatro|cinco|seis|siete|ocho|nueve|diez|doce)\s+(?:vez|veces)\s+(?:al|por|cada)\s+dia\b",
    )
    .expect("frequency pattern")
});

static INTERVAL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\bcada\s+(\d+)\s+horas?\b").expect("interval pattern"));

static ROUTE_RES: LazyLock<Vec<(Route, Regex)>> = LazyLock::new(|| {
    let pats = [
        (Route::Oral, r"\boral(?:mente)?\b|\bpor boca\b"),
        (Route::Topical, r"\btopic[ao]s?\b|\bsobre la piel\b|\bcutanea\b"),
        (Route::Inhaled, r"\binhalad[ao]s?\b|\binhalacion(?:es)?\b|\binhalador(?:es)?\b"),
        (
            Route::Injection,
            r"\binyeccion(?:es)?\b|\binyectable\b|\binyectad[ao]\b|\bintramuscular\b|\bsubcutanea\b|\bintravenosa\b",
        ),
    ];
    pats.into_iter()
        .map(|(r, p)| (r, Regex::new(p).expect("route pattern")))
        .collect()
});

fn parse_number(text: &str) -> Option<f64> {
    text.replace(',', ".").parse().ok()
}

fn word_number(text: &str) -> Option<f64> {
    let n = match text {
        "una" | "un" => 1,
        "dos" => 2,
        "tres" => 3,
        "cuatro" => 4,
        "cinco" => 5,
        "seis" => 6,
        "siete" => 7,
        "ocho" => 8,
        "nueve" => 9,
        "diez" => 10,
        "doce" => 12,
        digits => return parse_number(digits),
    };
    Some(n as f64)
}

fn unit_of(text: &str) -> Option<DoseUnit> {
    Some(match text {
        "mg" => DoseUnit::Mg,
        "ml" => DoseUnit::Ml,
        "g" => DoseUnit::G,
        "ui" | "iu" => DoseUnit::Iu,
        t if t.starts_with("comprimido") || t.starts_with("tableta") => DoseUnit::Tablet,
        _ => return None,
    })
}

/// Dose expressions `(value, unit, matched text)` in folded text.
pub fn dose_expressions(folded: &str) -> Vec<(f64, DoseUnit, String)> {
    DOSE_RE
        .captures_iter(folded)
        .filter_map(|c| {
            let value = parse_number(&c[1])?;
            let unit = unit_of(&c[2])?;
            Some((value, unit, c[0].to_string()))
        })
        .collect()
}

/// Frequency expressions `(times per day, matched text)` in folded text.
pub fn frequency_expressions(folded: &str) -> Vec<(f64, String)> {
    let mut out: Vec<(usize, f64, String)> = FREQ_RE
        .captures_iter(folded)
        .filter_map(|c| {
            let m = c.get(0).expect("whole match");
            Some((m.start(), word_number(&c[1])?, m.as_str().to_string()))
        })
        .collect();
    out.extend(INTERVAL_RE.captures_iter(folded).filter_map(|c| {
        let m = c.get(0).expect("whole match");
        let hours = parse_number(&c[1])?;
        (hours > 0.0).then(|| (m.start(), 24.0 / hours, m.as_str().to_string()))
    }));
    out.sort_by_key(|(pos, _, _)| *pos);
    out.into_iter().map(|(_, v, t)| (v, t)).collect()
}

/// Route terms `(route, matched text)` in folded text.
pub fn route_mentions(folded: &str) -> Vec<(Route, String)> {
    let mut out: Vec<(usize, Route, String)> = Vec::new();
    for (route, re) in ROUTE_RES.iter() {
        for m in re.find_iter(folded) {
            out.push((m.start(), *route, m.as_str().to_string()));
        }
    }
    out.sort_by_key(|(pos, _, _)| *pos);
    out.into_iter().map(|(_, r, t)| (r, t)).collect()
}

struct FlatNode<'a> {
    id: &'a str,
    kind: NodeKind,
    folded: String,
    /// Indices of this node and all its descendants.
    subtree: Vec<usize>,
}

fn flatten(artifact: &UiArtifact) -> Vec<FlatNode<'_>> {
    let refs = artifact.walk();
    let mut flat: Vec<FlatNode<'_>> = refs
        .iter()
        .map(|r| FlatNode {
            id: &r.node.node_id,
            kind: r.node.kind,
            folded: fold(&r.node.text),
            subtree: Vec::new(),
        })
        .collect();
    // Pre-order: a node's subtree is the contiguous run of deeper nodes after it.
    for i in 0..refs.len() {
        let mut j = i + 1;
        while j < refs.len() && refs[j].depth > refs[i].depth {
            j += 1;
        }
        flat[i].subtree = (i..j).collect();
    }
    flat
}

fn trim_terminal(text: &str) -> &str {
    text.trim_end_matches(['.', '!', '?', '…', ' '])
}

pub fn check_factual_consistency(artifact: &UiArtifact, source: &SourceDocument) -> Result<FactualReport, ScorerError> {
    if artifact.source_id != source.id {
        return Err(ScorerError::SourceMismatch {
            artifact_source: artifact.source_id.clone(),
            source_id: source.id.clone(),
        });
    }
    let flat = flatten(artifact);
    let scopes: Vec<BTreeSet<usize>> = source
        .medications
        .iter()
        .map(|med| {
            let name = fold(&med.drug_name);
            flat.iter()
                .filter(|n| super::safety::contains_word(&n.folded, &name))
                .flat_map(|n| n.subtree.iter().copied())
                .collect()
        })
        .collect();
    let claimed: BTreeSet<usize> = scopes.iter().flatten().copied().collect();
    let unclaimed: Vec<usize> = (0..flat.len()).filter(|i| !claimed.contains(i)).collect();

    let mut findings = Vec::new();
    let mut slots = 0usize;
    for (med, scope) in source.medications.iter().zip(&scopes) {
        slots += 3 + med.warnings.len();
        let facts: Vec<&FlatNode<'_>> = scope
            .iter()
            .map(|&i| &flat[i])
            .filter(|n| n.kind != NodeKind::Warning)
            .collect();
        check_dose(med, &facts, &mut findings);
        check_frequency(med, &facts, &mut findings);
        check_route(med, &facts, &mut findings);
        for warning in &med.warnings {
            let needle = fold(trim_terminal(warning));
            let found = scope
                .iter()
                .chain(unclaimed.iter())
                .any(|&i| flat[i].folded.contains(&needle));
            if !found {
                findings.push(ConsistencyFinding {
                    kind: FindingKind::Omission,
                    field: FactField::Warning,
                    expected: warning.clone(),
                    found: None,
                    ui_node_id: None,
                    severity: Severity::Critical,
                });
            }
        }
    }
    let critical = findings.iter().filter(|f| f.severity == Severity::Critical).count();
    let score = if slots == 0 {
        1.0
    } else {
        (1.0 - critical as f64 / slots as f64).max(0.0)
    };
    Ok(FactualReport {
        score,
        findings,
        slots,
    })
}

fn contradiction(field: FactField, expected: String, found: String, node: &str) -> ConsistencyFinding {
    ConsistencyFinding {
        kind: FindingKind::Contradiction,
        field,
        expected,
        found: Some(found),
        ui_node_id: Some(node.to_string()),
        severity: Severity::Critical,
    }
}

fn omission(field: FactField, expected: String) -> ConsistencyFinding {
    ConsistencyFinding {
        kind: FindingKind::Omission,
        field,
        expected,
        found: None,
        ui_node_id: None,
        severity: Severity::Critical,
    }
}

fn check_dose(med: &MedicationRecord, facts: &[&FlatNode<'_>], findings: &mut Vec<ConsistencyFinding>) {
    let expected = dose_phrase(med);
    let mut stated = false;
    for node in facts {
        for (value, unit, text) in dose_expressions(&node.folded) {
            stated = true;
            if value != med.dose_value || unit != med.dose_unit {
                findings.push(contradiction(FactField::Dose, expected.clone(), text, node.id));
            }
        }
    }
    if !stated {
        findings.push(omission(FactField::Dose, expected));
    }
}

fn check_frequency(med: &MedicationRecord, facts: &[&FlatNode<'_>], findings: &mut Vec<ConsistencyFinding>) {
    let expected = frequency_phrase(med.frequency_per_day);
    let mut stated = false;
    for node in facts {
        for (per_day, text) in frequency_expressions(&node.folded) {
            stated = true;
            if (per_day - med.frequency_per_day as f64).abs() > 1e-9 {
                findings.push(contradiction(FactField::Frequency, expected.clone(), text, node.id));
            }
        }
    }
    if !stated {
        findings.push(omission(FactField::Frequency, expected));
    }
}

fn check_route(med: &MedicationRecord, facts: &[&FlatNode<'_>], findings: &mut Vec<ConsistencyFinding>) {
    let expected = route_term(med.route).to_string();
    let mut stated = false;
    for node in facts {
        let mut reported = BTreeSet::new();
        for (route, text) in route_mentions(&node.folded) {
            stated = true;
            if route != med.route && reported.insert(route) {
                findings.push(contradiction(FactField::Route, expected.clone(), text, node.id));
            }
        }
    }
    if !stated {
        findings.push(omission(FactField::Route, expected));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::generation::{generate_template, GenerationContext};

    fn template(source: &SourceDocument, profile_id: &str) -> UiArtifact {
        let registry = catalog::illustrative_registry();
        let snap = registry.current();
        let profile = snap.profile(profile_id).unwrap();
        let rules = snap.matching_rules(profile);
        let ctx = GenerationContext {
            registry_version: snap.version,
            policy_version: 1,
            created_at: catalog::epoch(),
            revision_of: None,
        };
        generate_template(source, profile, &rules, &ctx).unwrap()
    }

    fn edit_text(artifact: &mut UiArtifact, id: &str, from: &str, to: &str) {
        fn visit(nodes: &mut [crate::generation::UiNode], id: &str, from: &str, to: &str) -> bool {
            for n in nodes {
                if n.node_id == id {
                    assert!(n.text.contains(from), "{} lacks {from}", n.text);
                    n.text = n.text.replace(from, to);
                    return true;
                }
                if visit(&mut n.children, id, from, to) {
                    return true;
                }
            }
            false
        }
        assert!(visit(&mut artifact.nodes, id, from, to));
    }

    #[test]
    fn exact_quote_scores_one() {
        let src = catalog::paracetamol_source();
        let art = template(&src, "p-cognitive");
        let report = check_factual_consistency(&art, &src).unwrap();
        assert_eq!(report.score, 1.0);
        assert!(report.findings.is_empty());
    }

    #[test]
    fn dose_mutation_is_one_contradiction() {
        let src = catalog::paracetamol_source();
        let mut art = template(&src, "p-cognitive");
        edit_text(&mut art, "n-root.med0.step0", "500 mg", "250 mg");
        let report = check_factual_consistency(&art, &src).unwrap();
        assert_eq!(
            report.findings,
            vec![ConsistencyFinding {
                kind: FindingKind::Contradiction,
                field: FactField::Dose,
                expected: "500 mg".into(),
                found: Some("250 mg".into()),
                ui_node_id: Some("n-root.med0.step0".into()),
                severity: Severity::Critical,
            }]
        );
        assert!((report.score - (1.0 - 1.0 / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn missing_warning_is_omission() {
        let src = catalog::paracetamol_source();
        let mut art = template(&src, "p-cognitive");
        art.nodes[0].children[0]
            .children
            .retain(|n| n.kind != NodeKind::Warning);
        let report = check_factual_consistency(&art, &src).unwrap();
        assert_eq!(report.findings.len(), 1);
        let f = &report.findings[0];
        assert_eq!((f.kind, f.field, f.severity), (FindingKind::Omission, FactField::Warning, Severity::Critical));
        assert_eq!(f.found, None);
    }

    #[test]
    fn source_mismatch() {
        let src = catalog::paracetamol_source();
        let mut art = template(&src, "p-general");
        art.source_id = "other".into();
        assert!(matches!(
            check_factual_consistency(&art, &src),
            Err(ScorerError::SourceMismatch { .. })
        ));
    }

    #[test]
    fn route_and_frequency_variants() {
        assert_eq!(route_mentions("tome por via topica y no oral")[0].0, Route::Topical);
        let f = frequency_expressions("tres veces al dia o cada 8 horas");
        assert_eq!(f.iter().map(|x| x.0).collect::<Vec<_>>(), vec![3.0, 3.0]);
        let d = dose_expressions("tome 2,5 ml o 1 comprimido, no 500 gotas");
        assert_eq!(d.len(), 2);
        assert_eq!((d[0].0, d[0].1), (2.5, DoseUnit::Ml));
        assert_eq!(d[1].1, DoseUnit::Tablet);
    }

    #[test]
    fn multi_drug_scopes_are_separate() {
        let src = catalog::two_drug_source();
        for profile in ["p-general", "p-cognitive", "p-lowvision"] {
            let art = template(&src, profile);
            let report = check_factual_consistency(&art, &src).unwrap();
            assert!(report.findings.is_empty(), "{profile}: {:?}", report.findings);
        }
    }
}
