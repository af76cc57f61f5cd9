use std::hash::Hasher;

use fnv::FnvHasher;

use super::{EmbedderSpec, EmbeddingError, EmbeddingVector, Modality, Result, TextEmbedder};
use crate::scalar::Real;

/// Deterministic reference text embedder: hashed character n-gram (n = 1..3)
/// term frequencies over case-folded, whitespace-collapsed text.
#[derive(Debug, Clone)]
pub struct NgramEmbedder {
    spec: EmbedderSpec,
}

impl Default for NgramEmbedder {
    fn default() -> Self {
        Self { spec: EmbedderSpec::ngram() }
    }
}

impl NgramEmbedder {
    pub const MODEL_ID: &'static str = "builtin/char-ngram-v1";
    pub const DIMENSION: usize = 384;
    const MAX_N: usize = 3;

    pub fn new() -> Self {
        Self::default()
    }

    pub fn normalize_text(text: &str) -> String {
        text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
    }

    /// Term-frequency vector before normalisation.
    pub fn counts(&self, text: &str) -> Result<Vec<f64>> {
        let norm = Self::normalize_text(text);
        if norm.is_empty() {
            return Err(EmbeddingError::EmptyText);
        }
        let chars: Vec<char> = format!(" {norm} ").chars().collect();
        let mut v = vec![0.0; Self::DIMENSION];
        for n in 1..=Self::MAX_N {
            for gram in chars.windows(n) {
                if n == 1 && gram[0] == ' ' {
                    continue;
                }
                let mut h = FnvHasher::default();
                h.write_u8(n as u8);
                for c in gram {
                    h.write_u32(*c as u32);
                }
                v[(h.finish() % Self::DIMENSION as u64) as usize] += 1.0;
            }
        }
        Ok(v)
    }
}

impl<T: Real> TextEmbedder<T> for NgramEmbedder {
    fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn embed_text(&self, text: &str, at: f64) -> Result<EmbeddingVector<T>> {
        let values = self.counts(text)?.into_iter().map(T::lit).collect();
        EmbeddingVector::normalized(values, Modality::Text, Self::MODEL_ID, at)
    }
}
