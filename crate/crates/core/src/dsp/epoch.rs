//! Fixed-window segmentation on a sample-index grid anchored at the first
//! frame. Windows that straddle a timestamp gap are dropped and counted.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{DspError, Result};
use crate::acquisition::{ChannelKind, DeviceDescriptor, SampleFrame};
use crate::scalar::Real;

/// Samples with larger magnitude are treated as artifacts (µV).
pub const ARTIFACT_AMPLITUDE_UV: f64 = 500.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Epoch<T> {
    pub t_start: f64,
    pub window_s: f64,
    pub sample_rate_hz: f64,
    /// Channel-major sample block.
    pub channels: Vec<Vec<T>>,
    pub quality: f64,
}

impl<T: Real> Epoch<T> {
    pub fn samples_per_channel(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.window_s
    }
}

/// Fraction of clean EXG samples: finite, within the artifact amplitude, on a
/// channel that is not flat-lined.
pub fn epoch_quality<T: Real>(channels: &[Vec<T>], exg: &[usize]) -> f64 {
    let per_channel: Vec<f64> = exg
        .iter()
        .filter_map(|&c| channels.get(c))
        .filter(|ch| !ch.is_empty())
        .map(|ch| {
            let n = ch.len() as f64;
            let mean = ch.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / n;
            let var = ch.iter().map(|v| (v.to_f64_lossy() - mean).powi(2)).sum::<f64>() / n;
            if var < 1e-12 {
                return 0.0;
            }
            let clean = ch
                .iter()
                .filter(|v| v.is_finite() && v.to_f64_lossy().abs() <= ARTIFACT_AMPLITUDE_UV)
                .count();
            clean as f64 / n
        })
        .collect();
    if per_channel.is_empty() {
        0.0
    } else {
        per_channel.iter().sum::<f64>() / per_channel.len() as f64
    }
}

/// Incremental epoching over a frame stream.
pub struct Epocher<T> {
    fs: f64,
    window: i64,
    hop: i64,
    window_s: f64,
    exg: Vec<usize>,
    origin: Option<f64>,
    next_start: i64,
    last_idx: Option<i64>,
    buf: VecDeque<(i64, Vec<T>)>,
    dropped: usize,
}

impl<T: Real> Epocher<T> {
    pub fn new(descriptor: &DeviceDescriptor, window_s: f64, hop_s: f64) -> Result<Self> {
        if !(hop_s > 0.0 && window_s >= hop_s) {
            return Err(DspError::InvalidEpoching { window_s, hop_s });
        }
        let fs = descriptor.sample_rate_hz;
        let window = (window_s * fs).round() as i64;
        let hop = (hop_s * fs).round() as i64;
        if hop < 1 {
            return Err(DspError::InvalidEpoching { window_s, hop_s });
        }
        Ok(Self {
            fs,
            window,
            hop,
            window_s,
            exg: descriptor.channels_of(ChannelKind::Exg),
            origin: None,
            next_start: 0,
            last_idx: None,
            buf: VecDeque::new(),
            dropped: 0,
        })
    }

    /// Grid positions skipped or discarded because they span a gap.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    pub fn push(&mut self, frame: &SampleFrame) -> Vec<Epoch<T>> {
        let origin = *self.origin.get_or_insert(frame.t);
        let idx = ((frame.t - origin) * self.fs).round() as i64;
        if self.last_idx.is_some_and(|last| idx <= last) {
            return Vec::new();
        }
        let mut out = Vec::new();
        while idx >= self.next_start + self.window {
            self.close_current(&mut out, Some(idx));
        }
        self.last_idx = Some(idx);
        self.buf.push_back((idx, frame.values.iter().map(|&v| T::lit(v)).collect()));
        out
    }

    /// Flushes every remaining complete window.
    pub fn finish(&mut self) -> Vec<Epoch<T>> {
        let mut out = Vec::new();
        if let Some(last) = self.last_idx {
            while self.next_start + self.window <= last + 1 {
                self.close_current(&mut out, None);
            }
        }
        out
    }

    fn close_current(&mut self, out: &mut Vec<Epoch<T>>, incoming: Option<i64>) {
        let start = self.next_start;
        let end = start + self.window;
        let members: Vec<&(i64, Vec<T>)> =
            self.buf.iter().filter(|(i, _)| *i >= start && *i < end).collect();
        let contiguous = members.windows(2).all(|w| w[1].0 - w[0].0 <= 2);
        let count = members.len() as i64;
        if contiguous && (count - self.window).abs() <= 1 {
            let channels: Vec<Vec<T>> = (0..members[0].1.len())
                .map(|c| members.iter().map(|(_, v)| v[c]).collect())
                .collect();
            let quality = epoch_quality(&channels, &self.exg);
            out.push(Epoch {
                t_start: self.origin.unwrap_or(0.0) + start as f64 / self.fs,
                window_s: self.window_s,
                sample_rate_hz: self.fs,
                channels,
                quality,
            });
            self.next_start += self.hop;
        } else if members.is_empty() {
            // jump across an empty stretch in one step
            let buffered = self.buf.iter().map(|(i, _)| *i).find(|i| *i >= end);
            let first_after = match (buffered, incoming) {
                (Some(a), Some(b)) => Some(a.min(b)),
                (a, b) => a.or(b),
            };
            let steps = match first_after {
                Some(i) => ((i - self.window - start) / self.hop + 1).max(1),
                None => 1,
            };
            self.dropped += steps as usize;
            self.next_start += steps * self.hop;
        } else {
            self.dropped += 1;
            self.next_start += self.hop;
        }
        let keep_from = self.next_start;
        while self.buf.front().is_some_and(|(i, _)| *i < keep_from) {
            self.buf.pop_front();
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpochBatch<T> {
    pub epochs: Vec<Epoch<T>>,
    pub dropped: usize,
}

/// Segments a finite frame sequence. A gapless input of `D` seconds yields
/// `floor((D - window_s) / hop_s) + 1` epochs.
pub fn epoch_stream<T: Real>(
    frames: &[SampleFrame],
    descriptor: &DeviceDescriptor,
    window_s: f64,
    hop_s: f64,
) -> Result<EpochBatch<T>> {
    let mut epocher = Epocher::new(descriptor, window_s, hop_s)?;
    let mut epochs = Vec::new();
    for f in frames {
        epochs.extend(epocher.push(f));
    }
    epochs.extend(epocher.finish());
    Ok(EpochBatch { epochs, dropped: epocher.dropped() })
}
