//! The per-epoch metric vector.
//!
//! Composite scores (relaxation, engagement, drowsiness, stress, mood,
//! meditation, cognitive_load) are `100 * clamp((raw - lo) / (hi - lo), 0, 1)`
//! with `(lo, hi)` taken from the [`Calibration`] profile. A metric whose inputs
//! are unavailable is exactly zero.

use serde::{Deserialize, Serialize};

use super::epoch::Epoch;
use super::heart::{rmssd, HeartRate};
use super::spectrum::{band_powers, Band, BandPowers, Spectrum, ANALYSIS_BAND_HZ};
use crate::acquisition::ChannelKind;
use crate::scalar::{clamp, safe_ratio, Real};

/// Offset inside the asymmetry logarithms.
pub const FAA_EPSILON: f64 = 1e-12;
/// Minimum EXG channel count for the cognitive-load estimate.
pub const COGNITIVE_LOAD_MIN_CHANNELS: usize = 8;

macro_rules! epoch_metrics {
    ($($field:ident),* $(,)?) => {
        /// Scalar metrics of one epoch. Field order is the canonical metric order.
        #[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
        pub struct EpochMetrics<T> {
            $(pub $field: T,)*
        }

        impl<T: Copy> EpochMetrics<T> {
            pub const NAMES: &'static [&'static str] = &[$(stringify!($field)),*];

            pub fn get(&self, name: &str) -> Option<T> {
                match name {
                    $(stringify!($field) => Some(self.$field),)*
                    _ => None,
                }
            }

            pub fn get_mut(&mut self, name: &str) -> Option<&mut T> {
                match name {
                    $(stringify!($field) => Some(&mut self.$field),)*
                    _ => None,
                }
            }

            pub fn values(&self) -> Vec<T> {
                vec![$(self.$field),*]
            }

            /// Builds metrics from values in [`Self::NAMES`] order.
            pub fn from_values(v: &[T]) -> Option<Self> {
                let mut it = v.iter().copied();
                let out = Self { $($field: it.next()?,)* };
                if it.next().is_some() { None } else { Some(out) }
            }
        }
    };
}

epoch_metrics!(
    relaxation, engagement, meditation, hr, drowsiness, mood, snr, stillness, cognitive_load,
    stress, tar, bar, dtr, tbr, sef95, faa, rmsd, pse, rel_alpha, rel_beta, rel_theta, rel_delta,
    rel_gamma, abs_delta, abs_theta, abs_alpha, abs_beta, abs_gamma,
);

impl<T: Real> EpochMetrics<T> {
    pub fn map<U, F: Fn(T) -> U>(&self, f: F) -> EpochMetrics<U>
    where
        U: Copy,
    {
        let v: Vec<U> = self.values().into_iter().map(f).collect();
        EpochMetrics::from_values(&v).expect("same arity")
    }
}

/// Linear normalisation range of a composite score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRange {
    pub lo: f64,
    pub hi: f64,
}

impl ScoreRange {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn score<T: Real>(&self, raw: T) -> T {
        let span = self.hi - self.lo;
        if span <= 0.0 {
            return T::zero();
        }
        T::lit(100.0) * clamp((raw - T::lit(self.lo)) / T::lit(span), T::zero(), T::one())
    }
}

/// Resting reference captured during a calibration session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    /// Mean `rel_alpha + rel_theta` at rest.
    pub rel_alpha_theta: f64,
}

/// Per-user scaling profile, loaded from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Calibration {
    pub relaxation: ScoreRange,
    pub engagement: ScoreRange,
    pub drowsiness: ScoreRange,
    pub stress: ScoreRange,
    pub mood: ScoreRange,
    pub meditation: ScoreRange,
    pub cognitive_load: ScoreRange,
    /// `(left, right)` frontal channel indices used for alpha asymmetry.
    pub frontal_pair: Option<(usize, usize)>,
    pub baseline: Option<Baseline>,
}

impl Default for Calibration {
    fn default() -> Self {
        Self {
            relaxation: ScoreRange::new(0.05, 0.55),
            engagement: ScoreRange::new(0.2, 2.0),
            drowsiness: ScoreRange::new(0.5, 3.0),
            stress: ScoreRange::new(0.5, 4.0),
            mood: ScoreRange::new(0.0, 1.0),
            meditation: ScoreRange::new(0.0, 1.0),
            cognitive_load: ScoreRange::new(0.5, 3.0),
            frontal_pair: Some((1, 2)),
            baseline: None,
        }
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Analysis-band bins of `psd` as `(freq, power)`.
fn in_band<'a, T: Real>(freqs: &'a [T], psd: &'a [T]) -> impl Iterator<Item = (T, T)> + 'a {
    let (lo, hi) = ANALYSIS_BAND_HZ;
    freqs.iter().zip(psd).filter_map(move |(f, p)| {
        let fv = f.to_f64_lossy();
        (fv >= lo && fv <= hi).then_some((*f, *p))
    })
}

/// Spectral edge: smallest frequency whose cumulative analysis-band power
/// reaches 95 % of the total.
pub fn sef95<T: Real>(freqs: &[T], psd: &[T]) -> T {
    let total: T = in_band(freqs, psd).map(|(_, p)| p).sum();
    if !(total > T::zero()) {
        return T::zero();
    }
    let target = T::lit(0.95) * total;
    let mut cum = T::zero();
    for (f, p) in in_band(freqs, psd) {
        cum = cum + p;
        if cum >= target {
            return f;
        }
    }
    T::lit(ANALYSIS_BAND_HZ.1)
}

/// Shannon entropy of the normalised analysis-band PSD divided by `ln(bins)`.
pub fn spectral_entropy<T: Real>(freqs: &[T], psd: &[T]) -> T {
    let bins: Vec<T> = in_band(freqs, psd).map(|(_, p)| p).collect();
    let total: T = bins.iter().copied().sum();
    if bins.len() < 2 || !(total > T::zero()) {
        return T::zero();
    }
    let h = bins
        .iter()
        .filter(|p| **p > T::zero())
        .map(|p| {
            let q = *p / total;
            -q * q.ln()
        })
        .sum::<T>();
    h / T::from_usize_lossy(bins.len()).ln()
}

/// Analysis-band power over the power outside it (excluding DC), in dB.
pub fn snr_db<T: Real>(freqs: &[T], psd: &[T]) -> T {
    let (lo, hi) = ANALYSIS_BAND_HZ;
    let (mut inside, mut outside) = (T::zero(), T::zero());
    for (k, (f, p)) in freqs.iter().zip(psd).enumerate() {
        let fv = f.to_f64_lossy();
        if fv >= lo && fv <= hi {
            inside = inside + *p;
        } else if k > 0 {
            outside = outside + *p;
        }
    }
    if !(inside > T::zero()) {
        return T::zero();
    }
    let eps = T::lit(FAA_EPSILON);
    T::lit(10.0) * ((inside + eps) / (outside + eps)).log10()
}

/// Computes the full metric vector for one epoch. Pure in its arguments.
///
/// `roles` gives the channel kind of each row of `epoch.channels`; `heart`
/// carries a rolling PPG estimate when one is available.
pub fn compute_metrics<T: Real>(
    epoch: &Epoch<T>,
    spectrum: &Spectrum<T>,
    roles: &[ChannelKind],
    calibration: &Calibration,
    heart: Option<&HeartRate<T>>,
) -> EpochMetrics<T> {
    let exg: Vec<usize> = (0..epoch.channels.len())
        .filter(|&c| roles.get(c).copied().unwrap_or(ChannelKind::Exg) == ChannelKind::Exg)
        .collect();
    let per_channel: Vec<Option<BandPowers<T>>> = (0..spectrum.psd.len())
        .map(|c| {
            exg.contains(&c)
                .then(|| band_powers(&spectrum.freqs, &spectrum.psd[c]).ok())
                .flatten()
        })
        .collect();
    let exg_bands: Vec<BandPowers<T>> = per_channel.iter().flatten().copied().collect();
    let bands = BandPowers::mean(&exg_bands);

    let mut m = EpochMetrics::<T>::default();
    if let Some(h) = heart {
        m.hr = h.bpm;
        m.rmsd = rmssd(&h.ibis_ms).unwrap_or(T::zero());
    }
    if bands.zero_power {
        return m;
    }

    let (d, t, a, b, g) = (
        bands.abs(Band::Delta),
        bands.abs(Band::Theta),
        bands.abs(Band::Alpha),
        bands.abs(Band::Beta),
        bands.abs(Band::Gamma),
    );
    m.abs_delta = d;
    m.abs_theta = t;
    m.abs_alpha = a;
    m.abs_beta = b;
    m.abs_gamma = g;
    m.rel_delta = bands.rel(Band::Delta);
    m.rel_theta = bands.rel(Band::Theta);
    m.rel_alpha = bands.rel(Band::Alpha);
    m.rel_beta = bands.rel(Band::Beta);
    m.rel_gamma = bands.rel(Band::Gamma);

    m.tar = safe_ratio(t, a);
    m.tbr = safe_ratio(t, b);
    m.bar = safe_ratio(b, a);
    m.dtr = safe_ratio(d, t);

    // channel-averaged PSD for the shape metrics
    let n_bins = spectrum.freqs.len();
    let mut mean_psd = vec![T::zero(); n_bins];
    for &c in &exg {
        for (acc, p) in mean_psd.iter_mut().zip(&spectrum.psd[c]) {
            *acc = *acc + *p;
        }
    }
    let n_exg = T::from_usize_lossy(exg.len().max(1));
    mean_psd.iter_mut().for_each(|p| *p = *p / n_exg);
    m.sef95 = sef95(&spectrum.freqs, &mean_psd);
    m.pse = spectral_entropy(&spectrum.freqs, &mean_psd);
    m.snr = snr_db(&spectrum.freqs, &mean_psd);

    if let Some((left, right)) = calibration.frontal_pair {
        if let (Some(Some(l)), Some(Some(r))) = (per_channel.get(left), per_channel.get(right)) {
            let eps = T::lit(FAA_EPSILON);
            m.faa = (r.abs(Band::Alpha) + eps).ln() - (l.abs(Band::Alpha) + eps).ln();
        }
    }

    m.relaxation = calibration.relaxation.score(m.rel_alpha);
    m.engagement = calibration.engagement.score(safe_ratio(b, a + t));
    m.drowsiness = calibration.drowsiness.score(safe_ratio(d + t, a + b));
    m.stress = calibration.stress.score(safe_ratio(b, t));
    let mood_raw =
        T::lit(0.5) * sigmoid(m.faa) + T::lit(0.5) * (m.engagement / T::lit(100.0));
    m.mood = calibration.mood.score(mood_raw);

    if let Some(base) = calibration.baseline {
        if base.rel_alpha_theta > 0.0 {
            let raw = (m.rel_alpha + m.rel_theta) / T::lit(base.rel_alpha_theta) - T::one();
            m.meditation = calibration.meditation.score(raw);
        }
    }

    if exg_bands.len() >= COGNITIVE_LOAD_MIN_CHANNELS {
        let half = exg_bands.len() / 2;
        let frontal = BandPowers::mean(&exg_bands[..half]);
        let posterior = BandPowers::mean(&exg_bands[half..]);
        let raw = safe_ratio(frontal.abs(Band::Theta), posterior.abs(Band::Alpha));
        m.cognitive_load = calibration.cognitive_load.score(raw);
    }
    // no motion sensor input: stillness stays zero
    m
}
