//! Source-of-truth registry: normative requirements, user profiles,
//! adaptation rules, and the structured medication data that generated text is
//! checked against.
//!
//! The registry is versioned. Every change produces a new immutable snapshot;
//! version 1 is the empty genesis snapshot. Readers hold `Arc` snapshots and
//! never observe a partially applied write.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("requirement id {0} already registered with different content")]
    DuplicateIdConflict(String),
    #[error("unresolved requirement ids: {0:?}")]
    UnresolvedRequirement(Vec<String>),
    #[error("registry version {0} is not retained")]
    UnknownVersion(u64),
    #[error("unknown profile {0}")]
    UnknownProfile(String),
    #[error("unknown rule {0}")]
    UnknownRule(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("rule {rule} conflicts with rule {other}: {reason}")]
    RuleConflict {
        rule: String,
        other: String,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Standard {
    #[serde(rename = "WCAG22")]
    Wcag22,
    #[serde(rename = "EN301549")]
    En301549,
    #[serde(rename = "ISO24495")]
    Iso24495,
    #[serde(rename = "COGA")]
    Coga,
    #[serde(rename = "DOMAIN_SAFETY")]
    DomainSafety,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Readability,
    SemanticFidelity,
    FactualConsistency,
    Presentation,
    Safety,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Readability,
        Category::SemanticFidelity,
        Category::FactualConsistency,
        Category::Presentation,
        Category::Safety,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Readability => "readability",
            Category::SemanticFidelity => "semantic_fidelity",
            Category::FactualConsistency => "factual_consistency",
            Category::Presentation => "presentation",
            Category::Safety => "safety",
        }
    }
}

fn first_revision() -> u32 {
    1
}

fn is_first_revision(r: &u32) -> bool {
    *r == 1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequirementRecord {
    pub id: String,
    pub standard: Standard,
    pub clause: String,
    pub category: Category,
    pub description: String,
    /// Bumped by governance refinements; earlier revisions stay in older
    /// registry snapshots.
    #[serde(default = "first_revision", skip_serializing_if = "is_first_revision")]
    pub revision: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Need {
    CognitiveImpairment,
    LowVision,
    None,
}

impl Need {
    pub fn as_str(self) -> &'static str {
        match self {
            Need::CognitiveImpairment => "cognitive_impairment",
            Need::LowVision => "low_vision",
            Need::None => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    PlainText,
    Pictogram,
    Stepwise,
    HighContrast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: String,
    pub needs: BTreeSet<Need>,
    pub language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub readability_floor_override: Option<f64>,
    #[serde(default)]
    pub modality_prefs: BTreeSet<Modality>,
}

impl UserProfile {
    pub fn validate(&self) -> Result<(), TraceError> {
        if self.id.trim().is_empty() {
            return Err(TraceError::InvalidRecord("profile id is empty".into()));
        }
        if self.language.trim().is_empty() {
            return Err(TraceError::InvalidRecord(format!(
                "profile {}: language tag is empty",
                self.id
            )));
        }
        if let Some(v) = self.readability_floor_override {
            if !v.is_finite() {
                return Err(TraceError::InvalidRecord(format!(
                    "profile {}: readability override is not finite",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// Needs used for threshold lookup; an empty set reads as `none`.
    pub fn effective_needs(&self) -> BTreeSet<Need> {
        if self.needs.is_empty() {
            BTreeSet::from([Need::None])
        } else {
            self.needs.clone()
        }
    }
}

/// One conjunct of a rule predicate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "field", rename_all = "snake_case")]
pub enum Clause {
    Needs { contains: Need },
    ModalityPrefs { contains: Modality },
    Language { equals: String },
}

/// Conjunction of clauses; the empty predicate matches every profile.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Predicate {
    pub all: Vec<Clause>,
}

impl Predicate {
    pub fn matches(&self, profile: &UserProfile) -> bool {
        self.all.iter().all(|clause| match clause {
            Clause::Needs { contains } => profile.needs.contains(contains),
            Clause::ModalityPrefs { contains } => profile.modality_prefs.contains(contains),
            Clause::Language { equals } => profile.language.eq_ignore_ascii_case(equals),
        })
    }

    fn normalized(&self) -> BTreeSet<String> {
        self.all
            .iter()
            .map(|c| serde_json::to_string(c).expect("clause serializes"))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Directive {
    SimplifyLanguage,
    StepwiseStructure,
    InsertPictogramSlot,
    HighContrastTheme,
    /// Text-only presentation; excludes pictogram slots.
    PlainTextOnly,
}

impl Directive {
    /// Pairs of directives that cannot both be in force.
    pub const CONFLICTS: [(Directive, Directive); 1] =
        [(Directive::InsertPictogramSlot, Directive::PlainTextOnly)];

    pub fn conflicts_with(self, other: Directive) -> bool {
        Self::CONFLICTS
            .iter()
            .any(|&(a, b)| (a == self && b == other) || (a == other && b == self))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationRule {
    pub id: String,
    pub version: u32,
    #[serde(default)]
    pub priority: i32,
    pub profile_predicate: Predicate,
    pub actions: Vec<Directive>,
    pub requirement_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DoseUnit {
    #[serde(rename = "mg")]
    Mg,
    #[serde(rename = "ml")]
    Ml,
    #[serde(rename = "g")]
    G,
    #[serde(rename = "IU")]
    Iu,
    #[serde(rename = "tablet")]
    Tablet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Oral,
    Topical,
    Inhaled,
    Injection,
}

impl Route {
    pub const ALL: [Route; 4] = [Route::Oral, Route::Topical, Route::Inhaled, Route::Injection];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimenKind {
    SingleDrug,
    MultiDrug,
}

impl RegimenKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RegimenKind::SingleDrug => "single_drug",
            RegimenKind::MultiDrug => "multi_drug",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedicationRecord {
    pub drug_name: String,
    pub dose_value: f64,
    pub dose_unit: DoseUnit,
    pub frequency_per_day: u32,
    pub route: Route,
    #[serde(default)]
    pub warnings: Vec<String>,
    pub regimen_kind: RegimenKind,
}

impl MedicationRecord {
    pub fn validate(&self) -> Result<(), TraceError> {
        if self.drug_name.trim().is_empty() {
            return Err(TraceError::InvalidRecord("medication without drug name".into()));
        }
        if !(self.dose_value.is_finite() && self.dose_value > 0.0) {
            return Err(TraceError::InvalidRecord(format!(
                "{}: dose must be a positive number",
                self.drug_name
            )));
        }
        if self.frequency_per_day < 1 {
            return Err(TraceError::InvalidRecord(format!(
                "{}: frequency_per_day must be at least 1",
                self.drug_name
            )));
        }
        if self.warnings.iter().any(|w| w.trim().is_empty()) {
            return Err(TraceError::InvalidRecord(format!(
                "{}: empty warning text",
                self.drug_name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub id: String,
    pub text: String,
    pub medications: Vec<MedicationRecord>,
    pub language: String,
}

impl SourceDocument {
    /// Ingestion checks. Medication facts are taken from the structured list,
    /// never extracted from the text; the text must name every listed drug.
    pub fn validate(&self) -> Result<(), TraceError> {
        if self.id.trim().is_empty() {
            return Err(TraceError::InvalidRecord("source id is empty".into()));
        }
        if self.text.trim().is_empty() {
            return Err(TraceError::InvalidRecord(format!("source {}: text is empty", self.id)));
        }
        if self.language.trim().is_empty() {
            return Err(TraceError::InvalidRecord(format!(
                "source {}: language tag is empty",
                self.id
            )));
        }
        let text = self.text.to_lowercase();
        let expected_kind = if self.medications.len() > 1 {
            RegimenKind::MultiDrug
        } else {
            RegimenKind::SingleDrug
        };
        for med in &self.medications {
            med.validate()?;
            if !text.contains(&med.drug_name.to_lowercase()) {
                return Err(TraceError::InvalidRecord(format!(
                    "source {}: {} is listed but not named in the text",
                    self.id, med.drug_name
                )));
            }
            if med.regimen_kind != expected_kind {
                return Err(TraceError::InvalidRecord(format!(
                    "source {}: {} has regimen_kind {} but the source lists {} medication(s)",
                    self.id,
                    med.drug_name,
                    med.regimen_kind.as_str(),
                    self.medications.len()
                )));
            }
        }
        Ok(())
    }

    pub fn regimen_kind(&self) -> RegimenKind {
        if self.medications.len() > 1 {
            RegimenKind::MultiDrug
        } else {
            RegimenKind::SingleDrug
        }
    }
}

/// One immutable registry version.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegistrySnapshot {
    pub version: u64,
    pub requirements: BTreeMap<String, RequirementRecord>,
    pub profiles: BTreeMap<String, UserProfile>,
    pub rules: BTreeMap<String, AdaptationRule>,
}

impl RegistrySnapshot {
    pub fn requirement(&self, id: &str) -> Option<&RequirementRecord> {
        self.requirements.get(id)
    }

    /// Resolve ids, reporting every unknown id rather than dropping it.
    pub fn resolve_traceability<'a, I, S>(&self, ids: I) -> Result<Vec<&RequirementRecord>, TraceError>
    where
        I: IntoIterator<Item = &'a S>,
        S: AsRef<str> + 'a + ?Sized,
    {
        let mut found = Vec::new();
        let mut missing = Vec::new();
        for id in ids {
            match self.requirements.get(id.as_ref()) {
                Some(rec) => found.push(rec),
                None => missing.push(id.as_ref().to_string()),
            }
        }
        if missing.is_empty() {
            Ok(found)
        } else {
            Err(TraceError::UnresolvedRequirement(missing))
        }
    }

    pub fn unresolved<'a, I>(&self, ids: I) -> Vec<String>
    where
        I: IntoIterator<Item = &'a String>,
    {
        let mut missing: Vec<String> = ids
            .into_iter()
            .filter(|id| !self.requirements.contains_key(id.as_str()))
            .cloned()
            .collect();
        missing.sort();
        missing.dedup();
        missing
    }

    pub fn profile(&self, id: &str) -> Result<&UserProfile, TraceError> {
        self.profiles
            .get(id)
            .ok_or_else(|| TraceError::UnknownProfile(id.to_string()))
    }

    /// Rules whose predicate matches, ordered by descending priority then id.
    pub fn matching_rules(&self, profile: &UserProfile) -> Vec<AdaptationRule> {
        let mut rules: Vec<AdaptationRule> = self
            .rules
            .values()
            .filter(|r| r.profile_predicate.matches(profile))
            .cloned()
            .collect();
        rules.sort_by(|a, b| b.priority.cmp(&a.priority).then_with(|| a.id.cmp(&b.id)));
        rules
    }

    pub fn categories_of<'a, I>(&self, ids: I) -> BTreeSet<Category>
    where
        I: IntoIterator<Item = &'a String>,
    {
        ids.into_iter()
            .filter_map(|id| self.requirements.get(id).map(|r| r.category))
            .collect()
    }

    pub fn to_document(&self) -> RegistryDocument {
        RegistryDocument {
            version: self.version,
            requirements: self.requirements.values().cloned().collect(),
            profiles: self.profiles.values().cloned().collect(),
            rules: self.rules.values().cloned().collect(),
        }
    }

    fn check_rule(&self, rule: &AdaptationRule) -> Result<(), TraceError> {
        if rule.version < 1 {
            return Err(TraceError::InvalidRecord(format!("rule {}: version must be >= 1", rule.id)));
        }
        if rule.requirement_ids.is_empty() {
            return Err(TraceError::InvalidRecord(format!(
                "rule {}: requirement_ids must be nonempty",
                rule.id
            )));
        }
        self.resolve_traceability(&rule.requirement_ids)?;
        for (i, a) in rule.actions.iter().enumerate() {
            for b in &rule.actions[i + 1..] {
                if a.conflicts_with(*b) {
                    return Err(TraceError::RuleConflict {
                        rule: rule.id.clone(),
                        other: rule.id.clone(),
                        reason: format!("{a:?} and {b:?} in one rule"),
                    });
                }
            }
        }
        let key = rule.profile_predicate.normalized();
        for other in self.rules.values() {
            if other.id == rule.id
                || other.priority != rule.priority
                || other.profile_predicate.normalized() != key
            {
                continue;
            }
            for a in &rule.actions {
                if let Some(b) = other.actions.iter().find(|b| a.conflicts_with(**b)) {
                    return Err(TraceError::RuleConflict {
                        rule: rule.id.clone(),
                        other: other.id.clone(),
                        reason: format!("{a:?} vs {b:?} at priority {}", rule.priority),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Registry import/export document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryDocument {
    pub version: u64,
    pub requirements: Vec<RequirementRecord>,
    pub profiles: Vec<UserProfile>,
    pub rules: Vec<AdaptationRule>,
}

/// Versioned registry with a single writer.
#[derive(Debug, Clone)]
pub struct Registry {
    history: Vec<Arc<RegistrySnapshot>>,
}

impl Default for Registry {
    fn default() -> Self {
        Self::new()
    }
}

impl Registry {
    /// Empty registry at genesis version 1.
    pub fn new() -> Self {
        Registry {
            history: vec![Arc::new(RegistrySnapshot {
                version: 1,
                ..Default::default()
            })],
        }
    }

    /// Rebuild from exported snapshots in ascending version order.
    pub fn from_documents(docs: Vec<RegistryDocument>) -> Result<Self, TraceError> {
        let mut history = Vec::with_capacity(docs.len());
        for doc in docs {
            if let Some(prev) = history.last().map(|s: &Arc<RegistrySnapshot>| s.version) {
                if doc.version != prev + 1 {
                    return Err(TraceError::InvalidRecord(format!(
                        "registry version {} does not follow {prev}",
                        doc.version
                    )));
                }
            }
            history.push(Arc::new(snapshot_from_document(doc)?));
        }
        if history.is_empty() {
            return Ok(Self::new());
        }
        Ok(Registry { history })
    }

    /// Single-document import; the snapshot keeps the document's version and
    /// earlier versions are not retained.
    pub fn import(doc: RegistryDocument) -> Result<Self, TraceError> {
        Self::from_documents(vec![doc])
    }

    pub fn current(&self) -> Arc<RegistrySnapshot> {
        self.history.last().expect("registry has a genesis snapshot").clone()
    }

    pub fn version(&self) -> u64 {
        self.current().version
    }

    pub fn at(&self, version: u64) -> Result<Arc<RegistrySnapshot>, TraceError> {
        let base = self.history[0].version;
        if version < base {
            return Err(TraceError::UnknownVersion(version));
        }
        self.history
            .get((version - base) as usize)
            .cloned()
            .ok_or(TraceError::UnknownVersion(version))
    }

    pub fn versions(&self) -> impl Iterator<Item = &Arc<RegistrySnapshot>> {
        self.history.iter()
    }

    fn commit(&mut self, edit: impl FnOnce(&mut RegistrySnapshot)) -> u64 {
        let mut next = (*self.current()).clone();
        next.version += 1;
        edit(&mut next);
        let version = next.version;
        self.history.push(Arc::new(next));
        version
    }

    /// Insert a requirement. Identical re-registration is a no-op.
    pub fn register_requirement(&mut self, rec: RequirementRecord) -> Result<u64, TraceError> {
        if rec.id.trim().is_empty() {
            return Err(TraceError::InvalidRecord("requirement id is empty".into()));
        }
        let current = self.current();
        if let Some(existing) = current.requirements.get(&rec.id) {
            if *existing == rec {
                return Ok(current.version);
            }
            return Err(TraceError::DuplicateIdConflict(rec.id));
        }
        Ok(self.commit(|s| {
            s.requirements.insert(rec.id.clone(), rec);
        }))
    }

    /// New revision of an existing requirement. The old revision remains in
    /// earlier snapshots.
    pub fn refine_requirement(&mut self, mut rec: RequirementRecord) -> Result<u64, TraceError> {
        let current = self.current();
        let existing = current
            .requirements
            .get(&rec.id)
            .ok_or_else(|| TraceError::UnresolvedRequirement(vec![rec.id.clone()]))?;
        rec.revision = existing.revision + 1;
        let mut unchanged = rec.clone();
        unchanged.revision = existing.revision;
        if unchanged == *existing {
            return Err(TraceError::InvalidRecord(format!(
                "refinement of {} changes nothing",
                rec.id
            )));
        }
        Ok(self.commit(|s| {
            s.requirements.insert(rec.id.clone(), rec);
        }))
    }

    pub fn register_profile(&mut self, profile: UserProfile) -> Result<u64, TraceError> {
        profile.validate()?;
        let current = self.current();
        if let Some(existing) = current.profiles.get(&profile.id) {
            if *existing == profile {
                return Ok(current.version);
            }
            return Err(TraceError::DuplicateIdConflict(profile.id));
        }
        Ok(self.commit(|s| {
            s.profiles.insert(profile.id.clone(), profile);
        }))
    }

    /// Insert a rule, or replace one with a strictly higher version.
    pub fn register_rule(&mut self, rule: AdaptationRule) -> Result<u64, TraceError> {
        let current = self.current();
        current.check_rule(&rule)?;
        if let Some(existing) = current.rules.get(&rule.id) {
            if *existing == rule {
                return Ok(current.version);
            }
            if rule.version <= existing.version {
                return Err(TraceError::DuplicateIdConflict(rule.id));
            }
        }
        Ok(self.commit(|s| {
            s.rules.insert(rule.id.clone(), rule);
        }))
    }

    pub fn export(&self, version: u64) -> Result<String, TraceError> {
        let snap = self.at(version)?;
        Ok(serde_json::to_string_pretty(&snap.to_document()).expect("registry serializes"))
    }
}

fn snapshot_from_document(doc: RegistryDocument) -> Result<RegistrySnapshot, TraceError> {
    let mut snap = RegistrySnapshot {
        version: doc.version,
        ..Default::default()
    };
    if doc.version < 1 {
        return Err(TraceError::InvalidRecord("registry version must be >= 1".into()));
    }
    for rec in doc.requirements {
        if snap.requirements.insert(rec.id.clone(), rec.clone()).is_some() {
            return Err(TraceError::DuplicateIdConflict(rec.id));
        }
    }
    for profile in doc.profiles {
        profile.validate()?;
        if snap.profiles.insert(profile.id.clone(), profile.clone()).is_some() {
            return Err(TraceError::DuplicateIdConflict(profile.id));
        }
    }
    for rule in doc.rules {
        snap.check_rule(&rule)?;
        if snap.rules.insert(rule.id.clone(), rule.clone()).is_some() {
            return Err(TraceError::DuplicateIdConflict(rule.id));
        }
    }
    Ok(snap)
}
