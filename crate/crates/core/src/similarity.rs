//! Normalized string similarity measures used as matchers.
//!
//! Every measure returns a value in `[0, 1]`, is symmetric, and returns 1 for
//! two identical non-empty strings. Each measure has a prepared form so a
//! match task can tokenize every entity once instead of once per pair; the
//! plain string functions go through the same prepared path, so both give
//! bit-identical results.

use serde::{Deserialize, Serialize};

use crate::model::Entity;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    EditDistance,
    Trigram,
    JaccardToken,
    CosineToken,
}

/// A matcher: one measure applied to one attribute.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimilarityMeasure {
    pub kind: MeasureKind,
    pub attribute: String,
}

impl SimilarityMeasure {
    pub fn new(kind: MeasureKind, attribute: impl Into<String>) -> Self {
        Self {
            kind,
            attribute: attribute.into(),
        }
    }

    /// Similarity of the measure's attribute; 0 when either side lacks it.
    pub fn apply(&self, e1: &Entity, e2: &Entity) -> f64 {
        match (e1.attribute(&self.attribute), e2.attribute(&self.attribute)) {
            (Some(a), Some(b)) => self.kind.similarity(a, b),
            _ => 0.0,
        }
    }

    /// Pre-processed attribute value, `None` when absent.
    pub fn prepare(&self, e: &Entity) -> Option<Prepared> {
        e.attribute(&self.attribute).map(|v| self.kind.prepare(v))
    }
}

/// Pre-processed form of one attribute value for a given measure.
#[derive(Clone, Debug, PartialEq)]
pub enum Prepared {
    Chars(Vec<char>),
    /// Sorted, deduplicated trigram codes.
    Grams(Vec<u64>),
    /// Sorted, deduplicated tokens.
    TokenSet(Vec<String>),
    /// Sorted `(token, count)` term frequencies.
    TermFreq(Vec<(String, u32)>),
}

impl MeasureKind {
    pub fn similarity(self, a: &str, b: &str) -> f64 {
        self.compare(&self.prepare(a), &self.prepare(b))
    }

    pub fn prepare(self, s: &str) -> Prepared {
        match self {
            MeasureKind::EditDistance => Prepared::Chars(s.chars().collect()),
            MeasureKind::Trigram => Prepared::Grams(trigrams(s)),
            MeasureKind::JaccardToken => {
                let mut tokens = tokenize(s);
                tokens.sort_unstable();
                tokens.dedup();
                Prepared::TokenSet(tokens)
            }
            MeasureKind::CosineToken => {
                let mut tokens = tokenize(s);
                tokens.sort_unstable();
                let mut tf: Vec<(String, u32)> = Vec::new();
                for t in tokens {
                    match tf.last_mut() {
                        Some((last, n)) if *last == t => *n += 1,
                        _ => tf.push((t, 1)),
                    }
                }
                Prepared::TermFreq(tf)
            }
        }
    }

    /// Compares two values prepared by this same kind. Mismatched variants
    /// compare as 0.
    pub fn compare(self, a: &Prepared, b: &Prepared) -> f64 {
        match (a, b) {
            (Prepared::Chars(a), Prepared::Chars(b)) => chars_sim(a, b),
            (Prepared::Grams(a), Prepared::Grams(b)) => set_jaccard(a, b),
            (Prepared::TokenSet(a), Prepared::TokenSet(b)) => set_jaccard(a, b),
            (Prepared::TermFreq(a), Prepared::TermFreq(b)) => tf_cosine(a, b),
            _ => 0.0,
        }
    }

    /// A cheap value that is never below `compare(a, b)`. Only edit distance
    /// has a useful one (the length difference bounds the distance).
    pub fn upper_bound(self, a: &Prepared, b: &Prepared) -> f64 {
        match (a, b) {
            (Prepared::Chars(a), Prepared::Chars(b)) => {
                let longest = a.len().max(b.len());
                if longest == 0 {
                    1.0
                } else {
                    1.0 - a.len().abs_diff(b.len()) as f64 / longest as f64
                }
            }
            _ => 1.0,
        }
    }
}

/// Levenshtein distance over Unicode scalar values.
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    rapidfuzz::distance::levenshtein::distance(a.iter().copied(), b.iter().copied())
}

fn chars_sim(a: &[char], b: &[char]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / longest as f64
}

/// `1 - lev(a, b) / max(|a|, |b|)`; 1 when both strings are empty.
pub fn edit_distance_sim(a: &str, b: &str) -> f64 {
    MeasureKind::EditDistance.similarity(a, b)
}

// Padding code points lie just past char::MAX so they never collide with input.
const PAD_START: u64 = 0x11_0000;
const PAD_END: u64 = 0x11_0001;

/// Character trigrams of `s` padded with two start and two end sentinels,
/// each encoded as three 21-bit code points. Empty input has no trigrams.
pub fn trigrams(s: &str) -> Vec<u64> {
    if s.is_empty() {
        return Vec::new();
    }
    let padded: Vec<u64> = [PAD_START, PAD_START]
        .into_iter()
        .chain(s.chars().map(|c| c as u64))
        .chain([PAD_END, PAD_END])
        .collect();
    let mut grams: Vec<u64> = padded
        .windows(3)
        .map(|w| (w[0] << 42) | (w[1] << 21) | w[2])
        .collect();
    grams.sort_unstable();
    grams.dedup();
    grams
}

/// Jaccard coefficient of the padded trigram sets.
pub fn trigram_sim(a: &str, b: &str) -> f64 {
    MeasureKind::Trigram.similarity(a, b)
}

/// Lowercases and splits on every run of non-alphanumeric characters.
pub fn tokenize(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn jaccard_token_sim(a: &str, b: &str) -> f64 {
    MeasureKind::JaccardToken.similarity(a, b)
}

pub fn cosine_token_sim(a: &str, b: &str) -> f64 {
    MeasureKind::CosineToken.similarity(a, b)
}

/// Jaccard over two sorted, deduplicated slices. Both empty gives 1.
fn set_jaccard<T: Ord>(a: &[T], b: &[T]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let common = sorted_intersection_len(a, b);
    let union = a.len() + b.len() - common;
    common as f64 / union as f64
}

fn sorted_intersection_len<T: Ord>(a: &[T], b: &[T]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn tf_cosine(a: &[(String, u32)], b: &[(String, u32)]) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let (mut i, mut j, mut dot) = (0, 0, 0u128);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += u128::from(a[i].1) * u128::from(b[j].1);
                i += 1;
                j += 1;
            }
        }
    }
    let norm = |v: &[(String, u32)]| v.iter().map(|(_, n)| u128::from(*n).pow(2)).sum::<u128>();
    let denom = ((norm(a) * norm(b)) as f64).sqrt();
    (dot as f64 / denom).clamp(0.0, 1.0)
}
