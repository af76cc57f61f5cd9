//! Unit-norm embeddings for signal windows and text, and the distance
//! arithmetic shared by search and analytics.

mod external;
mod ngram;
mod spectral;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use external::{ExternalEmbedder, ExternalRequest, ExternalResponse};
pub use ngram::NgramEmbedder;
pub use spectral::SpectralEmbedder;

use crate::acquisition::ChannelKind;
use crate::dsp::{DspError, Epoch};
use crate::scalar::Real;

/// Tolerance on the unit-norm invariant.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding is the zero vector before normalisation")]
    Degenerate,
    #[error("text is empty")]
    EmptyText,
    #[error("embedding window contains no epochs")]
    EmptyWindow,
    #[error("embeddings are not comparable: {a} vs {b}")]
    Incomparable { a: String, b: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("external embedder: {0}")]
    External(String),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

pub type Result<T, E = EmbeddingError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Exg,
    Text,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Exg => "exg",
            Modality::Text => "text",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector<T> {
    pub values: Vec<T>,
    pub modality: Modality,
    pub model_id: String,
    pub created_at: f64,
}

impl<T: Real> EmbeddingVector<T> {
    /// L2-normalises `values`; fails on an all-zero (or non-finite) input.
    pub fn normalized(
        values: Vec<T>,
        modality: Modality,
        model_id: impl Into<String>,
        created_at: f64,
    ) -> Result<Self> {
        let values = l2_normalize(values)?;
        Ok(Self { values, modality, model_id: model_id.into(), created_at })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> T {
        dot(&self.values, &self.values).sqrt()
    }

    pub fn is_unit(&self) -> bool {
        (self.norm().to_f64_lossy() - 1.0).abs() <= UNIT_NORM_TOLERANCE
    }

    pub fn comparable_with(&self, other: &Self) -> bool {
        self.modality == other.modality && self.model_id == other.model_id && self.dim() == other.dim()
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

pub fn l2_normalize<T: Real>(mut values: Vec<T>) -> Result<Vec<T>> {
    let norm = dot(&values, &values).sqrt();
    if !(norm > T::zero()) || !norm.is_finite() {
        return Err(EmbeddingError::Degenerate);
    }
    values.iter_mut().for_each(|v| *v = *v / norm);
    Ok(values)
}

/// `1 - a·b` for unit vectors of the same model, clamped to `[0, 2]`.
pub fn cosine_distance<T: Real>(a: &EmbeddingVector<T>, b: &EmbeddingVector<T>) -> Result<T> {
    if !a.comparable_with(b) {
        return Err(EmbeddingError::Incomparable {
            a: format!("{}/{}/{}", a.modality.as_str(), a.model_id, a.dim()),
            b: format!("{}/{}/{}", b.modality.as_str(), b.model_id, b.dim()),
        });
    }
    Ok(raw_distance(&a.values, &b.values))
}

/// Distance between raw unit-vector slices without the model check.
#[inline]
pub fn raw_distance<T: Real>(a: &[T], b: &[T]) -> T {
    crate::scalar::clamp(T::one() - dot(a, b), T::zero(), T::lit(2.0))
}

/// `round((1 - d) * 100)` (half away from zero), clamped to `[0, 100]`.
pub fn similarity_percent<T: Real>(distance: T) -> u8 {
    let s = ((T::one() - distance) * T::lit(100.0)).to_f64_lossy().round();
    s.clamp(0.0, 100.0) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedderKind {
    BuiltinSpectral,
    BuiltinNgram,
    External,
}

/// Registry entry describing one embedding model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderSpec {
    pub model_id: String,
    pub modality: Modality,
    pub dimension: usize,
    pub kind: EmbedderKind,
    /// Program and arguments for external embedders.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub command: Vec<String>,
    /// Worker processes for external embedders.
    #[serde(default = "default_pool")]
    pub pool: usize,
}

fn default_pool() -> usize {
    1
}

impl EmbedderSpec {
    pub fn spectral() -> Self {
        Self {
            model_id: SpectralEmbedder::MODEL_ID.into(),
            modality: Modality::Exg,
            dimension: SpectralEmbedder::DIMENSION,
            kind: EmbedderKind::BuiltinSpectral,
            command: Vec::new(),
            pool: 1,
        }
    }

    pub fn ngram() -> Self {
        Self {
            model_id: NgramEmbedder::MODEL_ID.into(),
            modality: Modality::Text,
            dimension: NgramEmbedder::DIMENSION,
            kind: EmbedderKind::BuiltinNgram,
            command: Vec::new(),
            pool: 1,
        }
    }
}

/// A window of contiguous epochs from one session.
#[derive(Debug, Clone, Copy)]
pub struct ExgWindow<'a, T> {
    pub epochs: &'a [Epoch<T>],
    pub roles: &'a [ChannelKind],
}

pub trait ExgEmbedder<T: Real>: Send + Sync {
    fn spec(&self) -> &EmbedderSpec;
    fn embed_exg(&self, window: ExgWindow<'_, T>) -> Result<EmbeddingVector<T>>;
}

pub trait TextEmbedder<T: Real>: Send + Sync {
    fn spec(&self) -> &EmbedderSpec;
    fn embed_text(&self, text: &str, at: f64) -> Result<EmbeddingVector<T>>;
}
