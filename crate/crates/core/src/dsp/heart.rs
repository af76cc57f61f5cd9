//! Heart rate and RMSSD from a PPG window.

use serde::{Deserialize, Serialize};

use super::filter::{BandPass, PPG_BAND_HZ};
use crate::scalar::Real;

/// Minimum PPG span for a heart-rate estimate (s).
pub const MIN_HR_WINDOW_S: f64 = 10.0;
/// Two beats closer than this are one beat.
pub const REFRACTORY_S: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeartRate<T> {
    pub bpm: T,
    /// Inter-beat intervals in milliseconds.
    pub ibis_ms: Vec<T>,
}

fn median<T: Real>(v: &[T]) -> T {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / T::lit(2.0)
    }
}

/// Beat positions (sample indices) in a band-passed PPG trace.
pub fn detect_peaks<T: Real>(x: &[T], fs: f64) -> Vec<usize> {
    let n = x.len();
    if n < 3 {
        return Vec::new();
    }
    let nf = T::from_usize_lossy(n);
    let mean = x.iter().copied().sum::<T>() / nf;
    let std = (x.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / nf).sqrt();
    if !(std > T::lit(1e-9)) {
        return Vec::new();
    }
    let threshold = mean + T::lit(0.5) * std;
    let mut candidates: Vec<usize> = (1..n - 1)
        .filter(|&i| x[i] > threshold && x[i] > x[i - 1] && x[i] >= x[i + 1])
        .collect();
    candidates.sort_by(|&a, &b| x[b].partial_cmp(&x[a]).unwrap_or(std::cmp::Ordering::Equal));
    let refractory = (REFRACTORY_S * fs).round() as usize;
    let mut accepted: Vec<usize> = Vec::new();
    for c in candidates {
        if accepted.iter().all(|&a| a.abs_diff(c) >= refractory) {
            accepted.push(c);
        }
    }
    accepted.sort_unstable();
    accepted
}

/// Estimates heart rate from a raw PPG window of at least
/// [`MIN_HR_WINDOW_S`]. Returns `None` when fewer than three beats are found.
pub fn detect_hr<T: Real>(ppg: &[T], fs: f64) -> Option<HeartRate<T>> {
    if (ppg.len() as f64) < MIN_HR_WINDOW_S * fs - 0.5 {
        return None;
    }
    let filtered = BandPass::<T>::design(PPG_BAND_HZ.0, PPG_BAND_HZ.1, None, fs).ok()?.apply(ppg);
    let peaks = detect_peaks(&filtered, fs);
    if peaks.len() < 3 {
        return None;
    }
    let ms_per_sample = T::lit(1000.0 / fs);
    let ibis_ms: Vec<T> = peaks
        .windows(2)
        .map(|w| T::from_usize_lossy(w[1] - w[0]) * ms_per_sample)
        .collect();
    let bpm = T::lit(60_000.0) / median(&ibis_ms);
    Some(HeartRate { bpm, ibis_ms })
}

/// Root mean square of successive inter-beat differences. Needs at least
/// three intervals.
pub fn rmssd<T: Real>(ibis_ms: &[T]) -> Option<T> {
    if ibis_ms.len() < 3 {
        return None;
    }
    let diffs: Vec<T> = ibis_ms.windows(2).map(|w| w[1] - w[0]).collect();
    let ms = diffs.iter().map(|d| *d * *d).sum::<T>() / T::from_usize_lossy(diffs.len());
    Some(ms.sqrt())
}
