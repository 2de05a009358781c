//! Checkpoint R: Spanish readability indices.
//!
//! Fernández-Huerta: `206.84 - 0.60 * (100 * S / W) - 1.02 * (W / T)`
//!
//! Szigriszt-Pazos (perspicuity): `206.835 - 62.3 * (S / W) - (W / T)`
//!
//! where S, W and T are syllable, word and sentence counts. Both are reported
//! unclamped.
//!
//! # Tokenizer (`es-tok-1`)
//!
//! - A word is a maximal run of letters or digits. A `.` or `,` between two
//!   digits stays inside the word, so `2,5` and `1.000` are one word each.
//! - Sentence terminators are `.`, `!`, `?` and `…`. A run of terminators
//!   closes at most one sentence, and only if the sentence holds a word.
//!   Trailing words with no terminator form a final sentence.
//! - A `.` directly after a word from [`ABBREVIATIONS`] does not terminate.
//!
//! # Syllabifier (`es-syl-1`)
//!
//! - Nuclei: `a e o á é ó í ú` are strong, `i u ü` weak. Adjacent vowels share a
//!   syllable unless both are strong, so accented `í`/`ú` always form a hiatus.
//! - `u` is silent in `que qui gue gui` (and accented forms); `ü` is not.
//! - `y` is a weak vowel when it is not followed by a vowel (`hoy`, `y`),
//!   otherwise a consonant.
//! - `h` is a consonant and separates vowels.
//! - Between nuclei, `ch ll rr qu gu` count as one consonant. One consonant
//!   goes to the next syllable; two split unless they form an onset cluster
//!   (`pr pl br bl fr fl tr dr cr cl gr gl kr kl`); three split 1|2 when the
//!   last two are a cluster and 2|1 otherwise; four split 2|2.
//! - A word without a vowel nucleus (numbers, `mg`) counts as one syllable.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SYLLABIFIER_VERSION: &str = "es-syl-1";
pub const TOKENIZER_VERSION: &str = "es-tok-1";

/// Lowercase abbreviations whose trailing period is not a sentence end.
pub const ABBREVIATIONS: &[&str] = &[
    "dr", "dra", "sr", "sra", "srta", "ud", "uds", "vd", "vds", "p", "ej", "aprox", "máx", "mín",
    "núm", "pág", "tel", "avda",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReadabilityError {
    #[error("text is empty after normalization")]
    EmptyText,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextCounts {
    pub syllables: usize,
    pub words: usize,
    pub sentences: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "code", rename_all = "snake_case")]
pub enum ReadabilityWarning {
    /// The indices are calibrated for Spanish; the score is still computed.
    LanguageUnsupported { language: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadabilityScore {
    pub fernandez_huerta: f64,
    pub szigriszt_pazos: f64,
    pub counts: TextCounts,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<ReadabilityWarning>,
}

pub fn fernandez_huerta(c: TextCounts) -> f64 {
    let (s, w, t) = (c.syllables as f64, c.words as f64, c.sentences as f64);
    206.84 - 0.60 * (100.0 * s / w) - 1.02 * (w / t)
}

pub fn szigriszt_pazos(c: TextCounts) -> f64 {
    let (s, w, t) = (c.syllables as f64, c.words as f64, c.sentences as f64);
    206.835 - 62.3 * (s / w) - (w / t)
}

pub fn is_spanish(language: &str) -> bool {
    let primary = language.split(['-', '_']).next().unwrap_or("");
    primary.eq_ignore_ascii_case("es")
}

pub fn score_readability(text: &str, language: &str) -> Result<ReadabilityScore, ReadabilityError> {
    let counts = count_text(text)?;
    let mut warnings = Vec::new();
    if !is_spanish(language) {
        warnings.push(ReadabilityWarning::LanguageUnsupported {
            language: language.to_string(),
        });
    }
    Ok(ReadabilityScore {
        fernandez_huerta: fernandez_huerta(counts),
        szigriszt_pazos: szigriszt_pazos(counts),
        counts,
        warnings,
    })
}

/// Tokenize and count. Errors when the text has no words.
pub fn count_text(text: &str) -> Result<TextCounts, ReadabilityError> {
    let (words, sentences) = tokenize(text);
    if words.is_empty() {
        return Err(ReadabilityError::EmptyText);
    }
    let syllables = words.iter().map(|w| count_syllables(w)).sum();
    Ok(TextCounts {
        syllables,
        words: words.len(),
        sentences,
    })
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '…')
}

/// Words and sentence count.
pub fn tokenize(text: &str) -> (Vec<String>, usize) {
    let chars: Vec<char> = text.chars().collect();
    let mut words = Vec::new();
    let mut sentences = 0usize;
    let mut words_in_sentence = 0usize;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_alphanumeric() {
            let start = i;
            while i < chars.len() {
                let decimal_mark = matches!(chars[i], '.' | ',')
                    && i > start
                    && chars[i - 1].is_ascii_digit()
                    && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
                if chars[i].is_alphanumeric() || decimal_mark {
                    i += 1;
                } else {
                    break;
                }
            }
            let word: String = chars[start..i].iter().collect();
            let abbreviation = chars.get(i) == Some(&'.')
                && ABBREVIATIONS.contains(&word.to_lowercase().as_str());
            words.push(word);
            words_in_sentence += 1;
            if abbreviation {
                i += 1;
            }
            continue;
        }
        if is_terminator(c) && words_in_sentence > 0 {
            sentences += 1;
            words_in_sentence = 0;
        }
        i += 1;
    }
    if words_in_sentence > 0 {
        sentences += 1;
    }
    (words, sentences)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Strong,
    Weak,
    Consonant,
}

fn vowel_class(c: char) -> Option<Class> {
    match c {
        'a' | 'e' | 'o' | 'á' | 'é' | 'ó' | 'í' | 'ú' | 'à' | 'è' | 'ò' => Some(Class::Strong),
        'i' | 'u' | 'ü' | 'ì' | 'ù' => Some(Class::Weak),
        _ => None,
    }
}

fn classify(word: &[char]) -> Vec<Class> {
    let n = word.len();
    let mut classes = Vec::with_capacity(n);
    for i in 0..n {
        let c = word[i];
        let next = word.get(i + 1).copied();
        let class = match c {
            'u' if i > 0
                && matches!(word[i - 1], 'q' | 'g')
                && next.is_some_and(|n| matches!(n, 'e' | 'i' | 'é' | 'í')) =>
            {
                Class::Consonant
            }
            'y' => {
                if next.and_then(vowel_class).is_some() {
                    Class::Consonant
                } else {
                    Class::Weak
                }
            }
            _ => vowel_class(c).unwrap_or(Class::Consonant),
        };
        classes.push(class);
    }
    classes
}

fn is_onset_cluster(a: &str, b: &str) -> bool {
    match b {
        "r" => matches!(a, "p" | "b" | "f" | "t" | "d" | "c" | "k" | "g"),
        "l" => matches!(a, "p" | "b" | "f" | "c" | "k" | "g"),
        _ => false,
    }
}

/// Vowel nuclei as `[start, end)` index ranges.
fn nuclei(classes: &[Class]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < classes.len() {
        if classes[i] == Class::Consonant {
            i += 1;
            continue;
        }
        let mut start = i;
        let mut j = i + 1;
        while j < classes.len() && classes[j] != Class::Consonant {
            if classes[j] == Class::Strong && classes[j - 1] == Class::Strong {
                out.push((start, j));
                start = j;
            }
            j += 1;
        }
        out.push((start, j));
        i = j;
    }
    out
}

/// Split a word into syllables.
pub fn syllabify(word: &str) -> Vec<String> {
    let lower: Vec<char> = word.to_lowercase().chars().collect();
    let original: Vec<char> = word.chars().collect();
    // Lowercasing can change length for a few exotic code points; fall back to
    // the lowercase form for display in that case.
    let display = if original.len() == lower.len() { original } else { lower.clone() };
    let classes = classify(&lower);

    let nuclei = nuclei(&classes);
    if nuclei.len() <= 1 {
        return vec![display.iter().collect()];
    }

    // Consonant units between consecutive nuclei decide the boundaries.
    let mut bounds = Vec::with_capacity(nuclei.len() - 1);
    for pair in nuclei.windows(2) {
        let (gap_start, gap_end) = (pair[0].1, pair[1].0);
        let mut units: Vec<(usize, String)> = Vec::new();
        let mut k = gap_start;
        while k < gap_end {
            let two: String = lower[k..(k + 2).min(gap_end)].iter().collect();
            if k + 1 < gap_end && matches!(two.as_str(), "ch" | "ll" | "rr" | "qu" | "gu") {
                units.push((k, two));
                k += 2;
            } else {
                units.push((k, lower[k].to_string()));
                k += 1;
            }
        }
        let cut = match units.len() {
            0 => gap_start,
            1 => units[0].0,
            2 => {
                if is_onset_cluster(&units[0].1, &units[1].1) {
                    units[0].0
                } else {
                    units[1].0
                }
            }
            3 => {
                if is_onset_cluster(&units[1].1, &units[2].1) {
                    units[1].0
                } else {
                    units[2].0
                }
            }
            n => units[n - 2].0,
        };
        bounds.push(cut);
    }

    let mut out = Vec::with_capacity(nuclei.len());
    let mut from = 0;
    for cut in bounds {
        out.push(display[from..cut].iter().collect());
        from = cut;
    }
    out.push(display[from..].iter().collect());
    out
}

/// Syllable count of one word, at least 1.
pub fn count_syllables(word: &str) -> usize {
    let lower: Vec<char> = word.to_lowercase().chars().collect();
    nuclei(&classify(&lower)).len().max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text() {
        assert_eq!(score_readability("", "es"), Err(ReadabilityError::EmptyText));
        assert_eq!(score_readability("  ¿? … ", "es"), Err(ReadabilityError::EmptyText));
    }

    #[test]
    fn single_word_sentence() {
        let s = score_readability("Sol.", "es").unwrap();
        assert_eq!(
            s.counts,
            TextCounts {
                syllables: 1,
                words: 1,
                sentences: 1
            }
        );
        assert!((s.fernandez_huerta - 145.82).abs() < 1e-9);
        assert!((s.szigriszt_pazos - 143.535).abs() < 1e-9);
        assert!(s.warnings.is_empty());
    }

    #[test]
    fn non_spanish_warns() {
        let s = score_readability("Sun.", "en-GB").unwrap();
        assert_eq!(
            s.warnings,
            vec![ReadabilityWarning::LanguageUnsupported {
                language: "en-GB".into()
            }]
        );
    }

    #[test]
    fn syllable_splits() {
        let cases = [
            ("pastilla", "pas-ti-lla"),
            ("comprimido", "com-pri-mi-do"),
            ("inyección", "in-yec-ción"),
            ("monstruo", "mons-truo"),
            ("quiero", "quie-ro"),
            ("aunque", "aun-que"),
            ("poeta", "po-e-ta"),
            ("ahí", "a-hí"),
            ("farmacéutico", "far-ma-céu-ti-co"),
            ("Uruguay", "U-ru-guay"),
            ("atlas", "at-las"),
            ("hombre", "hom-bre"),
            ("instrucciones", "ins-truc-cio-nes"),
        ];
        for (word, expected) in cases {
            assert_eq!(syllabify(word).join("-"), expected, "{word}");
            assert_eq!(count_syllables(word), expected.split('-').count(), "{word}");
        }
    }

    #[test]
    fn tokenizer_rules() {
        let (words, sentences) = tokenize("El Dr. Pérez receta 2,5 ml. ¡Ya! ¿Bien?… Fin");
        assert_eq!(words, ["El", "Dr", "Pérez", "receta", "2,5", "ml", "Ya", "Bien", "Fin"]);
        assert_eq!(sentences, 4);
        assert_eq!(count_syllables("500"), 1);
        assert_eq!(count_syllables("mg"), 1);
    }
}
