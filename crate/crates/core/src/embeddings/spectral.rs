use super::{EmbedderSpec, EmbeddingError, EmbeddingVector, ExgEmbedder, ExgWindow, Modality, Result};
use crate::acquisition::ChannelKind;
use crate::dsp::{band_powers, power_spectrum, sef95, spectral_entropy, Band, ANALYSIS_BAND_HZ};
use crate::scalar::{safe_ratio, Real};

const FEATURES_PER_CHANNEL: usize = 10;

/// Deterministic reference EXG embedder built from spectral features.
///
/// Per EXG channel: the five relative band powers, the theta/alpha,
/// theta/beta and beta/alpha ratios (squashed to `r / (1 + r)`), sef95 / 44
/// and spectral entropy. Features are averaged over the window, zero-padded
/// or truncated to 64 values and L2-normalised.
#[derive(Debug, Clone)]
pub struct SpectralEmbedder {
    spec: EmbedderSpec,
}

impl Default for SpectralEmbedder {
    fn default() -> Self {
        Self { spec: EmbedderSpec::spectral() }
    }
}

fn squash<T: Real>(r: T) -> T {
    r / (T::one() + r)
}

impl SpectralEmbedder {
    pub const MODEL_ID: &'static str = "builtin/spectral-v1";
    pub const DIMENSION: usize = 64;

    pub fn new() -> Self {
        Self::default()
    }

    /// Raw (unnormalised) feature vector of a window.
    pub fn features<T: Real>(&self, window: ExgWindow<'_, T>) -> Result<Vec<T>> {
        if window.epochs.is_empty() {
            return Err(EmbeddingError::EmptyWindow);
        }
        let exg: Vec<usize> = (0..window.epochs[0].channels.len())
            .filter(|&c| window.roles.get(c).copied().unwrap_or(ChannelKind::Exg) == ChannelKind::Exg)
            .collect();
        let mut acc = vec![T::zero(); exg.len() * FEATURES_PER_CHANNEL];
        for epoch in window.epochs {
            let spectrum = power_spectrum(epoch)?;
            for (slot, &c) in exg.iter().enumerate() {
                let psd = &spectrum.psd[c];
                let bp = band_powers(&spectrum.freqs, psd)?;
                let (t, a, b) = (bp.abs(Band::Theta), bp.abs(Band::Alpha), bp.abs(Band::Beta));
                let feats = [
                    bp.rel(Band::Delta),
                    bp.rel(Band::Theta),
                    bp.rel(Band::Alpha),
                    bp.rel(Band::Beta),
                    bp.rel(Band::Gamma),
                    squash(safe_ratio(t, a)),
                    squash(safe_ratio(t, b)),
                    squash(safe_ratio(b, a)),
                    sef95(&spectrum.freqs, psd) / T::lit(ANALYSIS_BAND_HZ.1),
                    spectral_entropy(&spectrum.freqs, psd),
                ];
                for (k, f) in feats.into_iter().enumerate() {
                    acc[slot * FEATURES_PER_CHANNEL + k] = acc[slot * FEATURES_PER_CHANNEL + k] + f;
                }
            }
        }
        let n = T::from_usize_lossy(window.epochs.len());
        acc.iter_mut().for_each(|v| *v = *v / n);
        acc.resize(Self::DIMENSION, T::zero());
        Ok(acc)
    }
}

impl<T: Real> ExgEmbedder<T> for SpectralEmbedder {
    fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn embed_exg(&self, window: ExgWindow<'_, T>) -> Result<EmbeddingVector<T>> {
        let values = self.features(window)?;
        let at = window.epochs.last().map_or(0.0, |e| e.t_end());
        EmbeddingVector::normalized(values, Modality::Exg, Self::MODEL_ID, at)
    }
}
