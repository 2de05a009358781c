//! Illustrative configuration and fixtures.
//!
//! The requirement set below is a small, illustrative selection of clauses
//! from WCAG 2.2, EN 301 549, ISO 24495-1 and W3C COGA, plus domain safety
//! requirements. It is not a normative encoding of those standards. The
//! default thresholds are likewise illustrative.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::{TimeZone, Utc};

use crate::checkpoints::safety::{LexiconEntry, MatchMode, SafetyLexicon};
use crate::checkpoints::{Checkpoint, Comparator, ReadabilityIndex};
use crate::escalation::{
    PolicyConfig, ReviewerRole, RouteKey, SafetySegmentRule, ThresholdEntry, UnknownConfidenceRule, RELEASE_RULE,
};
use crate::generation::{generate_template, GenerationContext, GenerationError, PromptTemplate, UiArtifact};
use crate::governance::PolicySurface;
use crate::supervision::DriftConfig;
use crate::trace::{
    AdaptationRule, Category, Clause, Directive, DoseUnit, MedicationRecord, Modality, Need, Predicate, RegimenKind,
    Registry, RegistrySnapshot, RequirementRecord, Route, SourceDocument, Standard, UserProfile,
};
use crate::Timestamp;

/// Requirement ids referenced by code.
pub mod ids {
    pub const STRUCTURE: &str = "REQ-WCAG22-1.3.1";
    pub const CONTRAST: &str = "REQ-WCAG22-1.4.6";
    pub const TEXT_ALTERNATIVE: &str = "REQ-EN301549-9.1.1.1";
    pub const READABILITY: &str = "REQ-ISO24495-P1";
    pub const UNDERSTANDING: &str = "REQ-COGA-4.4.1";
    pub const STEPWISE: &str = "REQ-COGA-4.3.5";
    pub const PICTOGRAM: &str = "REQ-COGA-4.4.6";
    pub const SEMANTIC: &str = "REQ-DOMAIN_SAFETY-SEMANTIC";
    pub const FACTUAL: &str = "REQ-DOMAIN_SAFETY-FACTUAL";
    pub const DOSE: &str = "REQ-DOMAIN_SAFETY-DOSE";
    pub const TIMING: &str = "REQ-DOMAIN_SAFETY-TIMING";
    pub const ROUTE: &str = "REQ-DOMAIN_SAFETY-ROUTE";
    pub const WARNINGS: &str = "REQ-DOMAIN_SAFETY-WARNINGS";
}

fn req(id: &str, standard: Standard, clause: &str, category: Category, description: &str) -> RequirementRecord {
    RequirementRecord {
        id: id.into(),
        standard,
        clause: clause.into(),
        category,
        description: description.into(),
        revision: 1,
    }
}

pub fn illustrative_requirements() -> Vec<RequirementRecord> {
    use Category::*;
    use Standard::*;
    vec![
        req(ids::STRUCTURE, Wcag22, "1.3.1 Info and Relationships", Presentation,
            "Structure conveyed through headings, sections and ordered steps is programmatically determinable."),
        req(ids::CONTRAST, Wcag22, "1.4.6 Contrast (Enhanced)", Presentation,
            "Text has a contrast ratio of at least 7:1 for users with low vision."),
        req(ids::TEXT_ALTERNATIVE, En301549, "9.1.1.1 Non-text content", Presentation,
            "Non-text content such as pictograms has a text alternative."),
        req(ids::READABILITY, Iso24495, "Principle 1: readers can understand the content", Readability,
            "Patient instructions use plain language at a readability level suited to the reader."),
        req(ids::UNDERSTANDING, Coga, "Objective 4: help users understand", Readability,
            "Readers rate the content as easy to understand."),
        req(ids::STEPWISE, Coga, "Objective 3: use a clear and understandable structure", Presentation,
            "Tasks are broken into one action per step."),
        req(ids::PICTOGRAM, Coga, "Objective 4: use images to support text", Presentation,
            "Key steps are supported by a pictogram."),
        req(ids::SEMANTIC, DomainSafety, "Meaning preservation", SemanticFidelity,
            "Generated content preserves the meaning of the clinical source."),
        req(ids::FACTUAL, DomainSafety, "Consistency with medication records", FactualConsistency,
            "Generated content contradicts no structured medication fact."),
        req(ids::DOSE, DomainSafety, "Dose", Safety, "The dose is stated exactly as prescribed."),
        req(ids::TIMING, DomainSafety, "Timing", Safety, "The administration frequency is stated exactly as prescribed."),
        req(ids::ROUTE, DomainSafety, "Route", Safety, "The route of administration is stated exactly as prescribed."),
        req(ids::WARNINGS, DomainSafety, "Warnings", Safety,
            "Every contraindication and safety warning on record is present."),
    ]
}

pub fn illustrative_profiles() -> Vec<UserProfile> {
    vec![
        UserProfile {
            id: "p-general".into(),
            needs: BTreeSet::from([Need::None]),
            language: "es-ES".into(),
            readability_floor_override: None,
            modality_prefs: BTreeSet::new(),
        },
        UserProfile {
            id: "p-cognitive".into(),
            needs: BTreeSet::from([Need::CognitiveImpairment]),
            language: "es-ES".into(),
            readability_floor_override: None,
            modality_prefs: BTreeSet::from([Modality::Stepwise, Modality::Pictogram]),
        },
        UserProfile {
            id: "p-lowvision".into(),
            needs: BTreeSet::from([Need::LowVision]),
            language: "es-ES".into(),
            readability_floor_override: None,
            modality_prefs: BTreeSet::from([Modality::HighContrast, Modality::PlainText]),
        },
    ]
}

fn rule(id: &str, clauses: Vec<Clause>, actions: Vec<Directive>, reqs: &[&str]) -> AdaptationRule {
    AdaptationRule {
        id: id.into(),
        version: 1,
        priority: 0,
        profile_predicate: Predicate { all: clauses },
        actions,
        requirement_ids: reqs.iter().map(|s| s.to_string()).collect(),
    }
}

pub fn illustrative_rules() -> Vec<AdaptationRule> {
    vec![
        rule(
            "rule-plain-language",
            vec![Clause::Needs { contains: Need::CognitiveImpairment }],
            vec![Directive::SimplifyLanguage, Directive::StepwiseStructure],
            &[ids::READABILITY, ids::STEPWISE],
        ),
        rule(
            "rule-stepwise",
            vec![Clause::ModalityPrefs { contains: Modality::Stepwise }],
            vec![Directive::StepwiseStructure],
            &[ids::STEPWISE],
        ),
        rule(
            "rule-pictograms",
            vec![Clause::ModalityPrefs { contains: Modality::Pictogram }],
            vec![Directive::InsertPictogramSlot],
            &[ids::PICTOGRAM, ids::TEXT_ALTERNATIVE],
        ),
        rule(
            "rule-high-contrast",
            vec![Clause::Needs { contains: Need::LowVision }],
            vec![Directive::HighContrastTheme, Directive::SimplifyLanguage],
            &[ids::CONTRAST, ids::READABILITY],
        ),
        rule(
            "rule-plain-text",
            vec![Clause::ModalityPrefs { contains: Modality::PlainText }],
            vec![Directive::PlainTextOnly],
            &[ids::TEXT_ALTERNATIVE],
        ),
    ]
}

/// Registry holding the illustrative requirements, profiles and rules.
pub fn illustrative_registry() -> Registry {
    let mut registry = Registry::new();
    for r in illustrative_requirements() {
        registry.register_requirement(r).expect("illustrative requirements are consistent");
    }
    for p in illustrative_profiles() {
        registry.register_profile(p).expect("illustrative profiles are valid");
    }
    for r in illustrative_rules() {
        registry.register_rule(r).expect("illustrative rules are valid");
    }
    registry
}

fn threshold(checkpoint: Checkpoint, need: Need, value: f64) -> ThresholdEntry {
    ThresholdEntry {
        checkpoint,
        need,
        threshold: value,
        comparator: Comparator::Ge,
    }
}

/// Illustrative default policy, version 1.
pub fn default_policy() -> PolicyConfig {
    let role_routing = BTreeMap::from([
        (RouteKey::TraceabilityFailure, ReviewerRole::SystemOwner),
        (RouteKey::FactualCritical, ReviewerRole::DomainExpert),
        (RouteKey::ThresholdR, ReviewerRole::AccessibilitySpecialist),
        (RouteKey::ThresholdS, ReviewerRole::DomainExpert),
        (RouteKey::ThresholdF, ReviewerRole::DomainExpert),
        (RouteKey::SafetySegment, ReviewerRole::DomainExpert),
        (RouteKey::HighUncertainty, ReviewerRole::DomainExpert),
    ]);
    PolicyConfig {
        policy_version: 1,
        readability_index: ReadabilityIndex::SzigrisztPazos,
        thresholds: vec![
            threshold(Checkpoint::R, Need::None, 55.0),
            threshold(Checkpoint::R, Need::CognitiveImpairment, 65.0),
            threshold(Checkpoint::S, Need::None, 0.75),
            threshold(Checkpoint::F, Need::None, 0.99),
            threshold(Checkpoint::H, Need::None, 3.0),
        ],
        safety_segment_rule: SafetySegmentRule::EscalateIfAnyFailure,
        unknown_confidence_rule: UnknownConfidenceRule::TreatAsHighUncertainty,
        confidence_floor: 0.6,
        role_routing,
        release_rule: RELEASE_RULE.into(),
    }
}

pub fn default_lexicon() -> SafetyLexicon {
    let entry = |term: &str, mode| LexiconEntry { term: term.into(), mode };
    SafetyLexicon::new(vec![
        entry("dosis", MatchMode::Substring),
        entry("no exceda", MatchMode::Substring),
        entry("no tome más de", MatchMode::Substring),
        entry("alergia", MatchMode::Word),
        entry("alérgico", MatchMode::Word),
        entry("embarazo", MatchMode::Word),
        entry("alcohol", MatchMode::Word),
        entry("contraindicado", MatchMode::Substring),
        entry("hemorragia", MatchMode::Word),
    ])
}

pub fn default_prompt_template() -> PromptTemplate {
    PromptTemplate {
        id: "tpl-es-patient".into(),
        version: 1,
        text: "Genere instrucciones para pacientes en lenguaje claro a partir del documento fuente. \
               Respete exactamente dosis, frecuencia, vía y advertencias."
            .into(),
    }
}

pub fn default_surface() -> PolicySurface {
    let tpl = default_prompt_template();
    PolicySurface {
        policy: default_policy(),
        registry_version: illustrative_registry().version(),
        lexicon: default_lexicon(),
        drift: DriftConfig::default(),
        prompt_templates: BTreeMap::from([(tpl.id.clone(), tpl)]),
    }
}

/// Fixed instant used by fixtures and deterministic runs.
pub fn epoch() -> Timestamp {
    Utc.with_ymd_and_hms(2026, 3, 2, 9, 0, 0).single().expect("valid fixture instant")
}

/// Template artifact for a registered profile at the snapshot's version.
pub fn template_artifact(
    registry: &Arc<RegistrySnapshot>,
    source: &SourceDocument,
    profile: &UserProfile,
    policy_version: u64,
) -> Result<UiArtifact, GenerationError> {
    let rules = registry.matching_rules(profile);
    let ctx = GenerationContext {
        registry_version: registry.version,
        policy_version,
        created_at: epoch(),
        revision_of: None,
    };
    generate_template(source, profile, &rules, &ctx)
}

struct Drug {
    name: &'static str,
    dose: f64,
    unit: DoseUnit,
    per_day: u32,
    route: Route,
    warnings: &'static [&'static str],
}

const DRUGS: &[Drug] = &[
    Drug { name: "Paracetamol", dose: 500.0, unit: DoseUnit::Mg, per_day: 3, route: Route::Oral,
        warnings: &["No tome más de 4 g al día."] },
    Drug { name: "Ibuprofeno", dose: 400.0, unit: DoseUnit::Mg, per_day: 3, route: Route::Oral,
        warnings: &["Tómelo con comida.", "No lo use si tiene úlcera de estómago."] },
    Drug { name: "Amoxicilina", dose: 500.0, unit: DoseUnit::Mg, per_day: 3, route: Route::Oral,
        warnings: &["Avise a su médico si tiene alergia a la penicilina."] },
    Drug { name: "Omeprazol", dose: 20.0, unit: DoseUnit::Mg, per_day: 1, route: Route::Oral,
        warnings: &["Tómelo antes del desayuno."] },
    Drug { name: "Metformina", dose: 850.0, unit: DoseUnit::Mg, per_day: 2, route: Route::Oral,
        warnings: &["Tómela con las comidas.", "Evite el alcohol."] },
    Drug { name: "Ipratropio", dose: 2.0, unit: DoseUnit::Ml, per_day: 3, route: Route::Inhaled,
        warnings: &["Enjuague la boca después de cada uso."] },
    Drug { name: "Insulina glargina", dose: 10.0, unit: DoseUnit::Iu, per_day: 1, route: Route::Injection,
        warnings: &["Cambie el lugar de la inyección cada día.", "Mida su azúcar antes de cenar."] },
    Drug { name: "Hidrocortisona", dose: 1.0, unit: DoseUnit::G, per_day: 2, route: Route::Topical,
        warnings: &["No la ponga en heridas abiertas."] },
    Drug { name: "Enoxaparina", dose: 40.0, unit: DoseUnit::Mg, per_day: 1, route: Route::Injection,
        warnings: &["Avise si tiene una hemorragia."] },
    Drug { name: "Loratadina", dose: 10.0, unit: DoseUnit::Mg, per_day: 1, route: Route::Oral, warnings: &[] },
    Drug { name: "Simvastatina", dose: 20.0, unit: DoseUnit::Mg, per_day: 1, route: Route::Oral,
        warnings: &["No beba zumo de pomelo."] },
    Drug { name: "Enalapril", dose: 10.0, unit: DoseUnit::Mg, per_day: 2, route: Route::Oral,
        warnings: &["Levántese despacio."] },
    Drug { name: "Amlodipino", dose: 5.0, unit: DoseUnit::Mg, per_day: 1, route: Route::Oral, warnings: &[] },
    Drug { name: "Levotiroxina", dose: 1.0, unit: DoseUnit::Tablet, per_day: 1, route: Route::Oral,
        warnings: &["Tómela en ayunas."] },
    Drug { name: "Diclofenaco", dose: 2.0, unit: DoseUnit::G, per_day: 3, route: Route::Topical,
        warnings: &["Lávese las manos después de usarlo."] },
    Drug { name: "Budesonida", dose: 2.0, unit: DoseUnit::Ml, per_day: 2, route: Route::Inhaled,
        warnings: &["Enjuague la boca después de cada uso."] },
    Drug { name: "Furosemida", dose: 40.0, unit: DoseUnit::Mg, per_day: 1, route: Route::Oral,
        warnings: &["Tómela por la mañana."] },
    Drug { name: "Azitromicina", dose: 500.0, unit: DoseUnit::Mg, per_day: 1, route: Route::Oral,
        warnings: &["Complete todos los días del tratamiento."] },
    Drug { name: "Clotrimazol", dose: 1.0, unit: DoseUnit::G, per_day: 2, route: Route::Topical,
        warnings: &["Evite el contacto con los ojos."] },
    Drug { name: "Cianocobalamina", dose: 1.0, unit: DoseUnit::Ml, per_day: 1, route: Route::Injection, warnings: &[] },
];

fn record(d: &Drug, regimen_kind: RegimenKind) -> MedicationRecord {
    MedicationRecord {
        drug_name: d.name.into(),
        dose_value: d.dose,
        dose_unit: d.unit,
        frequency_per_day: d.per_day,
        route: d.route,
        warnings: d.warnings.iter().map(|w| w.to_string()).collect(),
        regimen_kind,
    }
}

fn clinical_line(m: &MedicationRecord) -> String {
    use crate::generation::{dose_phrase, frequency_phrase, route_phrase};
    let mut line = format!(
        "Tome {} de {} {}, {}.",
        dose_phrase(m),
        m.drug_name,
        route_phrase(m.route),
        frequency_phrase(m.frequency_per_day)
    );
    for w in &m.warnings {
        line.push(' ');
        line.push_str(w);
    }
    line
}

fn source(id: String, meds: Vec<MedicationRecord>) -> SourceDocument {
    let text = meds.iter().map(clinical_line).collect::<Vec<_>>().join(" ");
    SourceDocument {
        id,
        text,
        medications: meds,
        language: "es-ES".into(),
    }
}

fn slug(name: &str) -> String {
    name.to_lowercase().replace(' ', "-")
}

/// Paracetamol 500 mg, 3 times a day, oral, one warning.
pub fn paracetamol_source() -> SourceDocument {
    source("src-paracetamol".into(), vec![record(&DRUGS[0], RegimenKind::SingleDrug)])
}

/// Ibuprofeno plus Omeprazol.
pub fn two_drug_source() -> SourceDocument {
    source(
        "src-ibuprofeno-omeprazol".into(),
        vec![
            record(&DRUGS[1], RegimenKind::MultiDrug),
            record(&DRUGS[3], RegimenKind::MultiDrug),
        ],
    )
}

/// Twenty single-drug sources and six two-drug sources.
pub fn corpus_sources() -> Vec<SourceDocument> {
    let mut out: Vec<SourceDocument> = DRUGS
        .iter()
        .map(|d| source(format!("src-{}", slug(d.name)), vec![record(d, RegimenKind::SingleDrug)]))
        .collect();
    for (a, b) in [(1, 3), (4, 12), (10, 11), (5, 15), (6, 8), (13, 16)] {
        let (da, db) = (&DRUGS[a], &DRUGS[b]);
        out.push(source(
            format!("src-{}-{}", slug(da.name), slug(db.name)),
            vec![record(da, RegimenKind::MultiDrug), record(db, RegimenKind::MultiDrug)],
        ));
    }
    out
}

/// Profile ids of the illustrative registry.
pub fn profile_ids() -> Vec<String> {
    illustrative_profiles().into_iter().map(|p| p.id).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_and_policy_are_consistent() {
        let registry = illustrative_registry();
        let snap = registry.current();
        for r in snap.rules.values() {
            assert!(snap.unresolved(r.requirement_ids.iter()).is_empty());
        }
        default_policy().validate().unwrap();
    }

    #[test]
    fn corpus_is_valid_and_large_enough() {
        let sources = corpus_sources();
        assert!(sources.len() * profile_ids().len() >= 50);
        let ids: BTreeSet<_> = sources.iter().map(|s| s.id.clone()).collect();
        assert_eq!(ids.len(), sources.len());
        for s in &sources {
            s.validate().unwrap();
        }
    }
}
