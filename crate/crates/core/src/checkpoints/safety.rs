//! Safety-segment detection against a versioned lexicon.

use serde::{Deserialize, Serialize};

use crate::digest::{sha256_hex, to_canonical};
use crate::generation::UiArtifact;

use super::fold;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    Substring,
    Word,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub term: String,
    #[serde(rename = "match")]
    pub mode: MatchMode,
}

/// Immutable lexicon snapshot. The version is a digest of the entries, so two
/// lexicons with equal content always share a version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyLexicon {
    pub version: String,
    pub entries: Vec<LexiconEntry>,
}

impl SafetyLexicon {
    pub fn new(entries: Vec<LexiconEntry>) -> Self {
        let version = format!("lex-{}", &sha256_hex(to_canonical(&entries).as_bytes())[..12]);
        SafetyLexicon { version, entries }
    }

    /// Parse the lexicon file format: a JSON list of `{"term", "match"}`.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(text)?))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("lexicon serializes")
    }

    pub fn matches(&self, text: &str) -> bool {
        let text = fold(text);
        self.entries.iter().any(|e| {
            let term = fold(&e.term);
            if term.is_empty() {
                return false;
            }
            match e.mode {
                MatchMode::Substring => text.contains(&term),
                MatchMode::Word => contains_word(&text, &term),
            }
        })
    }
}

/// Whole-word containment: the match is bounded by non-alphanumerics.
pub fn contains_word(text: &str, term: &str) -> bool {
    let mut from = 0;
    while let Some(pos) = text[from..].find(term) {
        let start = from + pos;
        let end = start + term.len();
        let before = text[..start].chars().next_back();
        let after = text[end..].chars().next();
        if !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric) {
            return true;
        }
        from = start + text[start..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

/// Nodes flagged `safety_critical` plus nodes whose text hits the lexicon, in
/// tree order.
pub fn detect_safety_segments(artifact: &UiArtifact, lexicon: &SafetyLexicon) -> Vec<String> {
    artifact
        .walk()
        .into_iter()
        .filter(|r| r.node.safety_critical || (!r.node.text.is_empty() && lexicon.matches(&r.node.text)))
        .map(|r| r.node.node_id.clone())
        .collect()
}
