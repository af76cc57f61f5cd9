//! Deterministic signal synthesis used for tests, demos and live simulation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{AcquisitionError, ChannelKind, ChannelRole, DeviceDescriptor, Result, SampleFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "wave", rename_all = "lowercase")]
pub enum Wave {
    Sine { freq_hz: f64, amplitude: f64 },
    Noise { sigma: f64 },
    /// Gaussian systolic pulses, the first one half a period after start.
    Pulse { bpm: f64, amplitude: f64 },
    Dc { level: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthComponent {
    #[serde(flatten)]
    pub wave: Wave,
    /// Active span `[from, to)` in seconds relative to the stream start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<[f64; 2]>,
}

impl From<Wave> for SynthComponent {
    fn from(wave: Wave) -> Self {
        Self { wave, span: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthChannel {
    pub role: ChannelKind,
    pub components: Vec<SynthComponent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    #[serde(default)]
    pub start_t: f64,
    pub channels: Vec<SynthChannel>,
}

fn default_name() -> String {
    "synthetic".into()
}

impl SynthSpec {
    /// One EXG channel carrying a single sine.
    pub fn sine(freq_hz: f64, amplitude: f64, duration_s: f64, sample_rate_hz: f64) -> Self {
        Self {
            name: default_name(),
            duration_s,
            sample_rate_hz,
            start_t: 0.0,
            channels: vec![SynthChannel {
                role: ChannelKind::Exg,
                components: vec![Wave::Sine { freq_hz, amplitude }.into()],
            }],
        }
    }

    /// One EXG channel of white noise.
    pub fn noise(sigma: f64, duration_s: f64, sample_rate_hz: f64) -> Self {
        Self {
            name: default_name(),
            duration_s,
            sample_rate_hz,
            start_t: 0.0,
            channels: vec![SynthChannel {
                role: ChannelKind::Exg,
                components: vec![Wave::Noise { sigma }.into()],
            }],
        }
    }

    /// One PPG channel with a pulse train.
    pub fn ppg(bpm: f64, duration_s: f64, sample_rate_hz: f64) -> Self {
        Self {
            name: default_name(),
            duration_s,
            sample_rate_hz,
            start_t: 0.0,
            channels: vec![SynthChannel {
                role: ChannelKind::Ppg,
                components: vec![Wave::Pulse { bpm, amplitude: 100.0 }.into()],
            }],
        }
    }

    /// `n` EXG channels, each a 10 Hz alpha rhythm over low-level noise.
    pub fn exg_only(n: usize, duration_s: f64, sample_rate_hz: f64, start_t: f64) -> Self {
        let channel = SynthChannel {
            role: ChannelKind::Exg,
            components: vec![
                Wave::Sine { freq_hz: 10.0, amplitude: 20.0 }.into(),
                Wave::Noise { sigma: 2.0 }.into(),
            ],
        };
        Self {
            name: default_name(),
            duration_s,
            sample_rate_hz,
            start_t,
            channels: vec![channel; n],
        }
    }

    /// Four EXG channels plus a 60 bpm PPG channel.
    pub fn muse_like(duration_s: f64, sample_rate_hz: f64, start_t: f64) -> Self {
        let mut spec = Self::exg_only(4, duration_s, sample_rate_hz, start_t);
        spec.name = "synthetic-muse".into();
        for ch in spec.channels.iter_mut() {
            ch.components.push(Wave::Sine { freq_hz: 6.0, amplitude: 6.0 }.into());
            ch.components.push(Wave::Sine { freq_hz: 20.0, amplitude: 5.0 }.into());
        }
        spec.channels.push(SynthChannel {
            role: ChannelKind::Ppg,
            components: vec![
                Wave::Pulse { bpm: 60.0, amplitude: 100.0 }.into(),
                Wave::Noise { sigma: 1.0 }.into(),
            ],
        });
        spec
    }

    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round().max(0.0) as usize
    }

    pub fn descriptor(&self) -> DeviceDescriptor {
        let exg = self.channels.iter().filter(|c| c.role == ChannelKind::Exg).count();
        DeviceDescriptor {
            name: self.name.clone(),
            channel_count: self.channels.len(),
            sample_rate_hz: self.sample_rate_hz,
            channel_roles: self
                .channels
                .iter()
                .enumerate()
                .map(|(index, c)| ChannelRole { index, role: c.role })
                .collect(),
            placement_id: if exg == 4 { "TP9-AF7-AF8-TP10".into() } else { format!("generic-{exg}") },
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AcquisitionError::Synth(m));
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return bad(format!("sample rate must be positive, got {}", self.sample_rate_hz));
        }
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration must be non-negative, got {}", self.duration_s));
        }
        let nyquist = self.sample_rate_hz / 2.0;
        for (i, ch) in self.channels.iter().enumerate() {
            for c in &ch.components {
                let freq = match c.wave {
                    Wave::Sine { freq_hz, .. } => freq_hz,
                    Wave::Pulse { bpm, .. } => {
                        if bpm <= 0.0 {
                            return bad(format!("channel {i}: pulse rate must be positive"));
                        }
                        bpm / 60.0
                    }
                    Wave::Noise { sigma } => {
                        if !(sigma >= 0.0) {
                            return bad(format!("channel {i}: noise sigma must be non-negative"));
                        }
                        0.0
                    }
                    Wave::Dc { .. } => 0.0,
                };
                if freq >= nyquist {
                    return bad(format!(
                        "channel {i}: component at {freq} Hz is at or above Nyquist ({nyquist} Hz)"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Lazily generated frames; bitwise reproducible for a given `(spec, seed)`.
pub struct SynthStream {
    spec: SynthSpec,
    index: usize,
    total: usize,
    rng: ChaCha8Rng,
}

/// Validates `spec` and returns its frame stream.
pub fn synth_signal(spec: &SynthSpec, seed: u64) -> Result<SynthStream> {
    spec.validate()?;
    Ok(SynthStream {
        spec: spec.clone(),
        index: 0,
        total: spec.frame_count(),
        rng: ChaCha8Rng::seed_from_u64(seed),
    })
}

fn pulse_value(rel_t: f64, bpm: f64, amplitude: f64) -> f64 {
    let period = 60.0 / bpm;
    let sigma = (0.12 * period).min(0.08);
    // pulses centred at (k + 0.5) * period
    let k = (rel_t / period - 0.5).round();
    let mut v = 0.0;
    for kk in [k - 1.0, k, k + 1.0] {
        if kk < 0.0 {
            continue;
        }
        let centre = (kk + 0.5) * period;
        let z = (rel_t - centre) / sigma;
        v += amplitude * (-0.5 * z * z).exp();
    }
    v
}

impl Iterator for SynthStream {
    type Item = SampleFrame;

    fn next(&mut self) -> Option<SampleFrame> {
        if self.index >= self.total {
            return None;
        }
        let rel_t = self.index as f64 / self.spec.sample_rate_hz;
        let t = self.spec.start_t + rel_t;
        let mut values = Vec::with_capacity(self.spec.channels.len());
        for ch in &self.spec.channels {
            let mut v = 0.0;
            for c in &ch.components {
                let active = c.span.is_none_or(|[from, to]| rel_t >= from && rel_t < to);
                let x = match c.wave {
                    Wave::Sine { freq_hz, amplitude } => {
                        amplitude * (std::f64::consts::TAU * freq_hz * rel_t).sin()
                    }
                    Wave::Noise { sigma } => {
                        // always draw so spans never perturb the random sequence
                        let n = Normal::new(0.0, sigma).expect("validated sigma");
                        n.sample(&mut self.rng)
                    }
                    Wave::Pulse { bpm, amplitude } => pulse_value(rel_t, bpm, amplitude),
                    Wave::Dc { level } => level,
                };
                if active {
                    v += x;
                }
            }
            values.push(v);
        }
        self.index += 1;
        Some(SampleFrame { t, values })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.total - self.index;
        (left, Some(left))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_hz_sine_frame_count_and_phase() {
        let frames: Vec<_> = synth_signal(&SynthSpec::sine(10.0, 20.0, 60.0, 256.0), 0)
            .unwrap()
            .collect();
        assert_eq!(frames.len(), 15360);
        assert_eq!(frames[0].values[0], 0.0);
        assert_eq!(frames[0].t, 0.0);
        assert!(frames.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn ppg_60_bpm_has_60_peaks_per_minute() {
        let frames: Vec<_> = synth_signal(&SynthSpec::ppg(60.0, 60.0, 256.0), 0).unwrap().collect();
        let v: Vec<f64> = frames.iter().map(|f| f.values[0]).collect();
        let peaks = (1..v.len() - 1)
            .filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1] && v[i] > 50.0)
            .count();
        assert_eq!(peaks, 60);
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let spec = SynthSpec::noise(5.0, 5.0, 256.0);
        let bytes = |seed| -> Vec<u8> {
            synth_signal(&spec, seed)
                .unwrap()
                .flat_map(|f| f.values[0].to_le_bytes())
                .collect()
        };
        assert_eq!(bytes(42), bytes(42));
        assert_ne!(bytes(42), bytes(43));
    }

    #[test]
    fn nyquist_components_rejected() {
        assert!(synth_signal(&SynthSpec::sine(128.0, 1.0, 1.0, 256.0), 0).is_err());
        assert!(synth_signal(&SynthSpec::sine(127.9, 1.0, 1.0, 256.0), 0).is_ok());
        assert!(synth_signal(&SynthSpec::ppg(60.0 * 200.0, 1.0, 256.0), 0).is_err());
    }

    #[test]
    fn spans_gate_components() {
        let mut spec = SynthSpec::sine(10.0, 20.0, 2.0, 256.0);
        spec.channels[0].components[0].span = Some([1.0, 2.0]);
        let frames: Vec<_> = synth_signal(&spec, 0).unwrap().collect();
        assert!(frames[..256].iter().all(|f| f.values[0] == 0.0));
        assert!(frames[256..].iter().any(|f| f.values[0] != 0.0));
    }
}
