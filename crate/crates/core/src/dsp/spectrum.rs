//! Welch power spectral density and canonical EEG band integration.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::epoch::Epoch;
use super::{DspError, Result};
use crate::scalar::Real;

/// Shortest block the estimator accepts.
pub const MIN_SPECTRUM_SAMPLES: usize = 64;
/// Welch segment length cap.
pub const MAX_SEGMENT: usize = 256;

/// Lower and upper edge of the analysed band (Hz).
pub const ANALYSIS_BAND_HZ: (f64, f64) = (0.5, 44.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Delta,
    Theta,
    Alpha,
    Beta,
    Gamma,
}

impl Band {
    pub const ALL: [Band; 5] = [Band::Delta, Band::Theta, Band::Alpha, Band::Beta, Band::Gamma];

    /// Edges in Hz; every band is half-open except gamma, which includes 44 Hz.
    pub const fn edges(self) -> (f64, f64) {
        match self {
            Band::Delta => (0.5, 4.0),
            Band::Theta => (4.0, 8.0),
            Band::Alpha => (8.0, 13.0),
            Band::Beta => (13.0, 30.0),
            Band::Gamma => (30.0, 44.0),
        }
    }

    fn contains(self, f: f64) -> bool {
        let (lo, hi) = self.edges();
        match self {
            Band::Gamma => f >= lo && f <= hi,
            _ => f >= lo && f < hi,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Band::Delta => "delta",
            Band::Theta => "theta",
            Band::Alpha => "alpha",
            Band::Beta => "beta",
            Band::Gamma => "gamma",
        }
    }
}

/// One-sided PSD per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum<T> {
    pub freqs: Vec<T>,
    pub psd: Vec<Vec<T>>,
    pub resolution_hz: T,
}

impl<T: Real> Spectrum<T> {
    pub fn channel(&self, c: usize) -> &[T] {
        &self.psd[c]
    }
}

/// Hann-windowed, 50 % overlap Welch estimator for a fixed segment length.
pub struct Welch<T: Real> {
    seg: usize,
    window: Vec<T>,
    window_power: T,
    fft: Arc<dyn Fft<T>>,
}

impl<T: Real> Welch<T> {
    pub fn new(seg: usize) -> Self {
        let n = T::from_usize_lossy(seg);
        // periodic Hann
        let window: Vec<T> = (0..seg)
            .map(|i| {
                let x = T::TAU() * T::from_usize_lossy(i) / n;
                T::lit(0.5) - T::lit(0.5) * x.cos()
            })
            .collect();
        let window_power = window.iter().map(|w| *w * *w).sum();
        let fft = FftPlanner::new().plan_fft_forward(seg);
        Self { seg, window, window_power, fft }
    }

    pub fn freqs(&self, fs: f64) -> Vec<T> {
        (0..=self.seg / 2).map(|k| T::lit(k as f64 * fs / self.seg as f64)).collect()
    }

    /// PSD of `x`. The mean is removed before segmenting and its power is
    /// placed in the DC bin, so `sum(psd) * df` tracks the mean square.
    pub fn psd(&self, x: &[T], fs: f64) -> Vec<T> {
        let n = x.len();
        let bins = self.seg / 2 + 1;
        let mean = x.iter().copied().sum::<T>() / T::from_usize_lossy(n.max(1));
        let hop = (self.seg / 2).max(1);
        let mut acc = vec![T::zero(); bins];
        let mut segments = 0usize;
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.seg];
        let mut start = 0;
        while start + self.seg <= n {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex::new((x[start + i] - mean) * self.window[i], T::zero());
            }
            self.fft.process(&mut buf);
            for (k, a) in acc.iter_mut().enumerate() {
                *a = *a + buf[k].norm_sqr();
            }
            segments += 1;
            start += hop;
        }
        let fs_t = T::lit(fs);
        let scale = T::one() / (fs_t * self.window_power * T::from_usize_lossy(segments.max(1)));
        let nyquist_bin = if self.seg % 2 == 0 { Some(self.seg / 2) } else { None };
        let two = T::lit(2.0);
        for (k, a) in acc.iter_mut().enumerate() {
            *a = *a * scale;
            if k != 0 && Some(k) != nyquist_bin {
                *a = *a * two;
            }
        }
        let df = fs_t / T::from_usize_lossy(self.seg);
        acc[0] = acc[0] + mean * mean / df;
        acc
    }
}

/// Welch PSD of every channel in `epoch`; segment length `min(256, N)`.
pub fn power_spectrum<T: Real>(epoch: &Epoch<T>) -> Result<Spectrum<T>> {
    let n = epoch.samples_per_channel();
    if n < MIN_SPECTRUM_SAMPLES {
        return Err(DspError::TooShort { samples: n, required: MIN_SPECTRUM_SAMPLES });
    }
    let welch = Welch::new(n.min(MAX_SEGMENT));
    let fs = epoch.sample_rate_hz;
    Ok(Spectrum {
        freqs: welch.freqs(fs),
        psd: epoch.channels.iter().map(|ch| welch.psd(ch, fs)).collect(),
        resolution_hz: T::lit(fs / welch.seg as f64),
    })
}

/// Absolute (power) and relative band powers.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BandPowers<T> {
    /// Indexed in [`Band::ALL`] order.
    pub abs: [T; 5],
    pub rel: [T; 5],
    /// Set when the analysis band carries no power; `rel` is then all zero.
    pub zero_power: bool,
}

impl<T: Real> BandPowers<T> {
    pub fn abs(&self, band: Band) -> T {
        self.abs[band as usize]
    }

    pub fn rel(&self, band: Band) -> T {
        self.rel[band as usize]
    }

    pub fn total(&self) -> T {
        self.abs.iter().copied().sum()
    }

    /// Element-wise mean over several channels.
    pub fn mean(items: &[BandPowers<T>]) -> BandPowers<T> {
        if items.is_empty() {
            return BandPowers { abs: [T::zero(); 5], rel: [T::zero(); 5], zero_power: true };
        }
        let n = T::from_usize_lossy(items.len());
        let mut abs = [T::zero(); 5];
        for it in items {
            for (a, v) in abs.iter_mut().zip(it.abs) {
                *a = *a + v;
            }
        }
        for a in abs.iter_mut() {
            *a = *a / n;
        }
        from_abs(abs)
    }
}

fn from_abs<T: Real>(abs: [T; 5]) -> BandPowers<T> {
    let total: T = abs.iter().copied().sum();
    if total > T::zero() && total.is_finite() {
        BandPowers { abs, rel: abs.map(|a| a / total), zero_power: false }
    } else {
        BandPowers { abs, rel: [T::zero(); 5], zero_power: true }
    }
}

/// Integrates one channel's PSD over the five bands.
pub fn band_powers<T: Real>(freqs: &[T], psd: &[T]) -> Result<BandPowers<T>> {
    let top = freqs.last().map_or(0.0, |f| f.to_f64_lossy());
    if freqs.len() < 2 || top < ANALYSIS_BAND_HZ.1 {
        return Err(DspError::BandCoverage { top_hz: top });
    }
    let df = freqs[1] - freqs[0];
    let mut abs = [T::zero(); 5];
    for (f, p) in freqs.iter().zip(psd) {
        let f = f.to_f64_lossy();
        if let Some(b) = Band::ALL.iter().position(|b| b.contains(f)) {
            abs[b] = abs[b] + *p * df;
        }
    }
    Ok(from_abs(abs))
}
