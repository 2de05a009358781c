//! Checkpoint S: semantic fidelity between source and generated text.
//!
//! The default scorer is token-level F1 over normalized token multisets.
//! Neural scorers plug in through [`SemanticScorer`].

use std::collections::BTreeMap;

use serde_json::{json, Value};

use super::ScorerError;

/// Lowercase, replace every non-alphanumeric character with a space, split on
/// whitespace.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn multiset(tokens: &[String]) -> BTreeMap<&str, usize> {
    let mut m = BTreeMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_insert(0) += 1;
    }
    m
}

/// Token F1 with its precision/recall breakdown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenOverlap {
    pub overlap: usize,
    pub source_tokens: usize,
    pub generated_tokens: usize,
}

impl TokenOverlap {
    pub fn f1(&self) -> f64 {
        2.0 * self.overlap as f64 / (self.source_tokens + self.generated_tokens) as f64
    }
}

pub fn token_overlap(source: &str, generated: &str) -> Result<TokenOverlap, ScorerError> {
    let a = normalize_tokens(source);
    let b = normalize_tokens(generated);
    if a.is_empty() || b.is_empty() {
        return Err(ScorerError::EmptyText);
    }
    let (ma, mb) = (multiset(&a), multiset(&b));
    let overlap = ma
        .iter()
        .map(|(tok, n)| (*n).min(mb.get(tok).copied().unwrap_or(0)))
        .sum();
    Ok(TokenOverlap {
        overlap,
        source_tokens: a.len(),
        generated_tokens: b.len(),
    })
}

/// Symmetric token F1 in [0, 1]; 1.0 iff the normalized multisets are equal.
pub fn score_semantic_fidelity(source: &str, generated: &str) -> Result<f64, ScorerError> {
    Ok(token_overlap(source, generated)?.f1())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticScore {
    pub value: f64,
    pub detail: Value,
}

pub trait SemanticScorer: Send + Sync {
    fn name(&self) -> &str;
    fn score(&self, source: &str, generated: &str) -> Result<SemanticScore, ScorerError>;
}

/// Deterministic lexical reference scorer.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalF1;

impl SemanticScorer for LexicalF1 {
    fn name(&self) -> &str {
        "token_f1"
    }

    fn score(&self, source: &str, generated: &str) -> Result<SemanticScore, ScorerError> {
        let o = token_overlap(source, generated)?;
        Ok(SemanticScore {
            value: o.f1(),
            detail: json!({
                "overlap": o.overlap,
                "source_tokens": o.source_tokens,
                "generated_tokens": o.generated_tokens,
            }),
        })
    }
}
