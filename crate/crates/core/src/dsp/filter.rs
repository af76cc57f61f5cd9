//! Zero-phase IIR band-pass: cascaded Butterworth biquads run forward and
//! backward over an odd-reflected signal.

use serde::{Deserialize, Serialize};

use super::{DspError, Result};
use crate::acquisition::{ChannelKind, DeviceDescriptor, SampleFrame};
use crate::scalar::Real;

/// Pass band applied to PPG channels regardless of the EXG band.
pub const PPG_BAND_HZ: (f64, f64) = (0.5, 5.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub low_hz: f64,
    pub high_hz: f64,
    #[serde(default)]
    pub notch_hz: Option<f64>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { low_hz: 0.5, high_hz: 44.0, notch_hz: None }
    }
}

/// Direct-form II transposed second-order section, `a0` normalised to 1.
#[derive(Debug, Clone, Copy)]
struct Biquad<T> {
    b: [T; 3],
    a: [T; 2],
}

#[derive(Clone, Copy)]
enum Shape {
    LowPass,
    HighPass,
    Notch,
}

// Q factors of the two sections of a 4th-order Butterworth.
const BUTTER4_Q: [f64; 2] = [0.541_196_100_146_197, 1.306_562_964_876_376_6];

impl<T: Real> Biquad<T> {
    fn design(shape: Shape, f0: f64, q: f64, fs: f64) -> Self {
        let w0 = std::f64::consts::TAU * f0 / fs;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        let a0 = 1.0 + alpha;
        let (b0, b1, b2) = match shape {
            Shape::LowPass => ((1.0 - cos) / 2.0, 1.0 - cos, (1.0 - cos) / 2.0),
            Shape::HighPass => ((1.0 + cos) / 2.0, -(1.0 + cos), (1.0 + cos) / 2.0),
            Shape::Notch => (1.0, -2.0 * cos, 1.0),
        };
        Self {
            b: [T::lit(b0 / a0), T::lit(b1 / a0), T::lit(b2 / a0)],
            a: [T::lit(-2.0 * cos / a0), T::lit((1.0 - alpha) / a0)],
        }
    }

    fn dc_gain(&self) -> T {
        (self.b[0] + self.b[1] + self.b[2]) / (T::one() + self.a[0] + self.a[1])
    }

    /// Filters `x` in place starting from the steady state for a constant `x[0]`.
    fn run(&self, x: &mut [T]) {
        let Some(&first) = x.first() else { return };
        let y0 = first * self.dc_gain();
        let mut s2 = self.b[2] * first - self.a[1] * y0;
        let mut s1 = y0 - self.b[0] * first;
        for v in x.iter_mut() {
            let input = *v;
            let y = self.b[0] * input + s1;
            s1 = self.b[1] * input - self.a[0] * y + s2;
            s2 = self.b[2] * input - self.a[1] * y;
            *v = y;
        }
    }
}

/// A designed zero-phase band-pass for one sample rate.
#[derive(Debug, Clone)]
pub struct BandPass<T> {
    sections: Vec<Biquad<T>>,
    pad: usize,
}

impl<T: Real> BandPass<T> {
    pub fn design(low_hz: f64, high_hz: f64, notch_hz: Option<f64>, fs: f64) -> Result<Self> {
        let nyquist = fs / 2.0;
        if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
            return Err(DspError::InvalidBand { low_hz, high_hz, nyquist });
        }
        let mut sections = Vec::with_capacity(5);
        for q in BUTTER4_Q {
            sections.push(Biquad::design(Shape::HighPass, low_hz, q, fs));
        }
        for q in BUTTER4_Q {
            sections.push(Biquad::design(Shape::LowPass, high_hz, q, fs));
        }
        if let Some(notch) = notch_hz {
            if !(notch > 0.0 && notch < nyquist) {
                return Err(DspError::InvalidNotch { notch_hz: notch, nyquist });
            }
            sections.push(Biquad::design(Shape::Notch, notch, 30.0, fs));
        }
        // roughly three time constants of the slowest pole
        let pad = (3.0 * fs / low_hz).ceil() as usize;
        Ok(Self { sections, pad })
    }

    fn pass(&self, x: &mut [T]) {
        for s in &self.sections {
            s.run(x);
        }
    }

    /// Forward-backward filtering; the output has no phase shift.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = self.pad.min(n - 1);
        let two = T::lit(2.0);
        let mut buf = Vec::with_capacity(n + 2 * pad);
        buf.extend((1..=pad).rev().map(|i| two * x[0] - x[i]));
        buf.extend_from_slice(x);
        buf.extend((1..=pad).map(|i| two * x[n - 1] - x[n - 1 - i]));
        self.pass(&mut buf);
        buf.reverse();
        self.pass(&mut buf);
        buf.reverse();
        buf[pad..pad + n].to_vec()
    }
}

/// Per-channel filters matching a device's channel roles.
#[derive(Debug, Clone)]
pub struct ChannelFilters<T> {
    per_channel: Vec<Option<BandPass<T>>>,
}

impl<T: Real> ChannelFilters<T> {
    pub fn new(descriptor: &DeviceDescriptor, config: &FilterConfig) -> Result<Self> {
        let fs = descriptor.sample_rate_hz;
        let exg = BandPass::design(config.low_hz, config.high_hz, config.notch_hz, fs)?;
        let ppg = BandPass::design(PPG_BAND_HZ.0, PPG_BAND_HZ.1, None, fs)?;
        let per_channel = (0..descriptor.channel_count)
            .map(|i| match descriptor.role(i) {
                Some(ChannelKind::Exg) => Some(exg.clone()),
                Some(ChannelKind::Ppg) => Some(ppg.clone()),
                _ => None,
            })
            .collect();
        Ok(Self { per_channel })
    }

    /// Filters channel-major sample blocks in place.
    pub fn apply_channels(&self, channels: &mut [Vec<T>]) {
        for (ch, filt) in channels.iter_mut().zip(&self.per_channel) {
            if let Some(f) = filt {
                *ch = f.apply(ch);
            }
        }
    }
}

/// Band-passes every EXG channel of `frames` (PPG channels use
/// [`PPG_BAND_HZ`], aux channels pass through). Zero-phase.
pub fn bandpass_filter(
    frames: &[SampleFrame],
    descriptor: &DeviceDescriptor,
    config: &FilterConfig,
) -> Result<Vec<SampleFrame>> {
    let filters = ChannelFilters::<f64>::new(descriptor, config)?;
    let mut channels: Vec<Vec<f64>> = (0..descriptor.channel_count)
        .map(|c| frames.iter().map(|f| f.values[c]).collect())
        .collect();
    filters.apply_channels(&mut channels);
    Ok(frames
        .iter()
        .enumerate()
        .map(|(i, f)| SampleFrame { t: f.t, values: channels.iter().map(|c| c[i]).collect() })
        .collect())
}
