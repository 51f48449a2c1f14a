//! Hashed n-gram features.
//!
//! Each text maps to lowercased word unigrams, word bigrams and character
//! trigrams. Every feature string is hashed with 64-bit FNV-1a and reduced
//! modulo the hashing dimension. Values are raw counts scaled by
//! `1 / sqrt(total feature count)`.

use std::collections::BTreeMap;

pub const DEFAULT_DIM: usize = 1 << 18;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |hash, &b| (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Sparse vector with strictly increasing indices and no zero entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    dim: usize,
    entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }
}

/// Lowercased alphanumeric word tokens.
pub fn words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

/// The unhashed feature strings of `text`, namespaced by kind.
pub fn feature_strings(text: &str) -> Vec<String> {
    let tokens = words(text);
    let mut out = Vec::new();
    for w in &tokens {
        out.push(format!("w:{w}"));
    }
    for pair in tokens.windows(2) {
        out.push(format!("b:{} {}", pair[0], pair[1]));
    }
    let normalized: Vec<char> = tokens.join(" ").chars().collect();
    for tri in normalized.windows(3) {
        out.push(format!("c:{}", tri.iter().collect::<String>()));
    }
    out
}

pub fn featurize(text: &str, dim: usize) -> FeatureVector {
    assert!(dim > 0 && dim <= u32::MAX as usize, "feature dim out of range");
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    let mut total = 0usize;
    for feature in feature_strings(text) {
        let idx = (fnv1a64(feature.as_bytes()) % dim as u64) as u32;
        *counts.entry(idx).or_insert(0.0) += 1.0;
        total += 1;
    }
    let scale = if total == 0 { 0.0 } else { 1.0 / (total as f64).sqrt() };
    FeatureVector {
        dim,
        entries: counts.into_iter().map(|(i, c)| (i, c * scale)).collect(),
    }
}
