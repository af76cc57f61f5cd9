//! Signal conditioning, epoching, spectral estimation and metric extraction.

mod epoch;
mod filter;
mod heart;
mod metrics;
mod spectrum;

use std::collections::VecDeque;

use thiserror::Error;

pub use epoch::{epoch_quality, epoch_stream, Epoch, EpochBatch, Epocher, ARTIFACT_AMPLITUDE_UV};
pub use filter::{bandpass_filter, BandPass, ChannelFilters, FilterConfig, PPG_BAND_HZ};
pub use heart::{detect_hr, detect_peaks, rmssd, HeartRate, MIN_HR_WINDOW_S, REFRACTORY_S};
pub use metrics::{
    compute_metrics, sef95, snr_db, spectral_entropy, Baseline, Calibration, EpochMetrics,
    ScoreRange, COGNITIVE_LOAD_MIN_CHANNELS, FAA_EPSILON,
};
pub use spectrum::{
    band_powers, power_spectrum, Band, BandPowers, Spectrum, Welch, ANALYSIS_BAND_HZ,
    MAX_SEGMENT, MIN_SPECTRUM_SAMPLES,
};

use crate::acquisition::{ChannelKind, DeviceDescriptor, SampleFrame};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("invalid band {low_hz}-{high_hz} Hz (need 0 < low < high < {nyquist} Hz)")]
    InvalidBand { low_hz: f64, high_hz: f64, nyquist: f64 },
    #[error("invalid notch {notch_hz} Hz (Nyquist {nyquist} Hz)")]
    InvalidNotch { notch_hz: f64, nyquist: f64 },
    #[error("invalid epoching: window {window_s} s, hop {hop_s} s")]
    InvalidEpoching { window_s: f64, hop_s: f64 },
    #[error("epoch too short for spectral estimate: {samples} < {required} samples")]
    TooShort { samples: usize, required: usize },
    #[error("spectrum stops at {top_hz} Hz, below the analysis band")]
    BandCoverage { top_hz: f64 },
}

pub type Result<T, E = DspError> = std::result::Result<T, E>;

/// Streaming settings for [`EpochProcessor`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ProcessorConfig {
    pub window_s: f64,
    pub hop_s: f64,
    pub filter: FilterConfig,
    /// Seconds of signal preceding each epoch fed to the zero-phase filter.
    pub filter_context_s: f64,
    /// Rolling PPG span used for heart rate.
    pub hr_window_s: f64,
}

impl Default for ProcessorConfig {
    fn default() -> Self {
        Self {
            window_s: 1.0,
            hop_s: 1.0,
            filter: FilterConfig::default(),
            filter_context_s: 3.0,
            hr_window_s: 15.0,
        }
    }
}

/// Output of one processed epoch.
#[derive(Debug, Clone)]
pub struct ProcessedEpoch<T> {
    pub epoch: Epoch<T>,
    pub spectrum: Option<Spectrum<T>>,
    pub metrics: EpochMetrics<T>,
}

/// Frame-in, metrics-out pipeline stage: filter, epoch, spectrum, metrics.
pub struct EpochProcessor<T: Real> {
    roles: Vec<ChannelKind>,
    ppg: Option<usize>,
    fs: f64,
    config: ProcessorConfig,
    calibration: Calibration,
    filters: ChannelFilters<T>,
    epocher: Epocher<T>,
    ring: VecDeque<SampleFrame>,
    ring_cap: usize,
    ppg_ring: VecDeque<T>,
    ppg_cap: usize,
}

impl<T: Real> EpochProcessor<T> {
    pub fn new(
        descriptor: &DeviceDescriptor,
        config: ProcessorConfig,
        calibration: Calibration,
    ) -> Result<Self> {
        let fs = descriptor.sample_rate_hz;
        let roles = (0..descriptor.channel_count)
            .map(|c| descriptor.role(c).unwrap_or(ChannelKind::Aux))
            .collect();
        Ok(Self {
            roles,
            ppg: descriptor.channels_of(ChannelKind::Ppg).first().copied(),
            fs,
            filters: ChannelFilters::new(descriptor, &config.filter)?,
            epocher: Epocher::new(descriptor, config.window_s, config.hop_s)?,
            ring: VecDeque::new(),
            ring_cap: ((config.filter_context_s + 2.0 * config.window_s) * fs).ceil() as usize,
            ppg_ring: VecDeque::new(),
            ppg_cap: (config.hr_window_s * fs).ceil() as usize,
            calibration,
            config,
        })
    }

    pub fn dropped(&self) -> usize {
        self.epocher.dropped()
    }

    pub fn push(&mut self, frame: &SampleFrame) -> Vec<ProcessedEpoch<T>> {
        self.ring.push_back(frame.clone());
        while self.ring.len() > self.ring_cap {
            self.ring.pop_front();
        }
        let epochs = self.epocher.push(frame);
        let out = epochs.into_iter().map(|e| self.process(e)).collect();
        // PPG enters the rolling buffer after the epochs it follows
        if let Some(p) = self.ppg {
            self.ppg_ring.push_back(T::lit(frame.values[p]));
            while self.ppg_ring.len() > self.ppg_cap {
                self.ppg_ring.pop_front();
            }
        }
        out
    }

    pub fn finish(&mut self) -> Vec<ProcessedEpoch<T>> {
        let epochs = self.epocher.finish();
        epochs.into_iter().map(|e| self.process(e)).collect()
    }

    fn filtered_block(&self, epoch: &Epoch<T>) -> Vec<Vec<T>> {
        let from = epoch.t_start - self.config.filter_context_s - 0.5 / self.fs;
        let frames: Vec<&SampleFrame> = self.ring.iter().filter(|f| f.t >= from).collect();
        let first = frames
            .iter()
            .position(|f| (f.t - epoch.t_start).abs() < 0.5 / self.fs);
        let contiguous = frames.windows(2).all(|w| (w[1].t - w[0].t) * self.fs < 2.5);
        let n = epoch.samples_per_channel();
        match first {
            Some(start) if contiguous && start + n <= frames.len() => {
                let mut channels: Vec<Vec<T>> = (0..self.roles.len())
                    .map(|c| frames.iter().map(|f| T::lit(f.values[c])).collect())
                    .collect();
                self.filters.apply_channels(&mut channels);
                channels.into_iter().map(|c| c[start..start + n].to_vec()).collect()
            }
            _ => {
                let mut channels = epoch.channels.clone();
                self.filters.apply_channels(&mut channels);
                channels
            }
        }
    }

    fn process(&mut self, mut epoch: Epoch<T>) -> ProcessedEpoch<T> {
        epoch.channels = self.filtered_block(&epoch);
        let heart = if (self.ppg_ring.len() as f64) >= MIN_HR_WINDOW_S * self.fs - 0.5 {
            let buf: Vec<T> = self.ppg_ring.iter().copied().collect();
            detect_hr(&buf, self.fs)
        } else {
            None
        };
        let spectrum = power_spectrum(&epoch).ok();
        let metrics = match &spectrum {
            Some(s) => compute_metrics(&epoch, s, &self.roles, &self.calibration, heart.as_ref()),
            None => {
                let mut m = EpochMetrics::default();
                if let Some(h) = &heart {
                    m.hr = h.bpm;
                    m.rmsd = rmssd(&h.ibis_ms).unwrap_or(T::zero());
                }
                m
            }
        };
        ProcessedEpoch { epoch, spectrum, metrics }
    }
}
