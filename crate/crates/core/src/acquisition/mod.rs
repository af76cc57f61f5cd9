//! Sample sources: file replay, deterministic synthesis and a line-delimited
//! socket stream. Every source yields [`SampleFrame`]s tagged with a
//! [`DeviceDescriptor`] over a bounded queue.

mod replay;
mod socket;
pub(crate) mod synth;

use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::mpsc::{self, Receiver};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use replay::{read_replay, write_replay, ReplayReader};
pub use socket::serve_frames;
pub use synth::{synth_signal, SynthChannel, SynthComponent, SynthSpec, SynthStream, Wave};

/// Default capacity of the producer/consumer frame queue.
pub const DEFAULT_QUEUE_CAPACITY: usize = 1024;

#[derive(Debug, Error)]
pub enum AcquisitionError {
    #[error("cannot open source {path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed stream at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("invalid device descriptor: {0}")]
    Descriptor(String),
    #[error("invalid synth spec: {0}")]
    Synth(String),
    #[error("timestamps not strictly increasing at line {line} ({prev} >= {t})")]
    NonMonotonic { line: usize, prev: f64, t: f64 },
}

pub type Result<T, E = AcquisitionError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Exg,
    Ppg,
    Aux,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelRole {
    pub index: usize,
    pub role: ChannelKind,
}

/// Static description of the device behind a stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceDescriptor {
    pub name: String,
    pub channel_count: usize,
    pub sample_rate_hz: f64,
    pub channel_roles: Vec<ChannelRole>,
    pub placement_id: String,
}

impl DeviceDescriptor {
    pub const MIN_CHANNELS: usize = 4;
    pub const MAX_CHANNELS: usize = 256;

    /// Builds a descriptor with `exg` EXG channels followed by `ppg` PPG channels.
    pub fn with_layout(name: &str, exg: usize, ppg: usize, sample_rate_hz: f64) -> Self {
        let channel_roles = (0..exg)
            .map(|index| ChannelRole { index, role: ChannelKind::Exg })
            .chain((exg..exg + ppg).map(|index| ChannelRole { index, role: ChannelKind::Ppg }))
            .collect();
        Self {
            name: name.to_string(),
            channel_count: exg + ppg,
            sample_rate_hz,
            channel_roles,
            placement_id: if exg == 4 { "TP9-AF7-AF8-TP10".into() } else { format!("generic-{exg}") },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(Self::MIN_CHANNELS..=Self::MAX_CHANNELS).contains(&self.channel_count) {
            return Err(AcquisitionError::Descriptor(format!(
                "channel_count {} outside [{}, {}]",
                self.channel_count,
                Self::MIN_CHANNELS,
                Self::MAX_CHANNELS
            )));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(AcquisitionError::Descriptor(format!(
                "sample_rate_hz must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        let mut seen = HashSet::new();
        for r in &self.channel_roles {
            if r.index >= self.channel_count {
                return Err(AcquisitionError::Descriptor(format!(
                    "channel index {} >= channel_count {}",
                    r.index, self.channel_count
                )));
            }
            if !seen.insert(r.index) {
                return Err(AcquisitionError::Descriptor(format!(
                    "channel index {} listed twice",
                    r.index
                )));
            }
        }
        if seen.len() != self.channel_count {
            return Err(AcquisitionError::Descriptor(
                "every channel needs exactly one role".into(),
            ));
        }
        Ok(())
    }

    pub fn role(&self, index: usize) -> Option<ChannelKind> {
        self.channel_roles.iter().find(|r| r.index == index).map(|r| r.role)
    }

    /// Channel indices carrying `kind`, ascending.
    pub fn channels_of(&self, kind: ChannelKind) -> Vec<usize> {
        let mut idx: Vec<usize> =
            self.channel_roles.iter().filter(|r| r.role == kind).map(|r| r.index).collect();
        idx.sort_unstable();
        idx
    }
}

/// One multichannel sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFrame {
    /// Unix seconds.
    pub t: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceConfig {
    Replay {
        path: PathBuf,
        /// Sleep between frames to reproduce the recorded cadence.
        #[serde(default)]
        pace: bool,
    },
    Synthetic {
        spec: SynthSpec,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        pace: bool,
    },
    Socket {
        address: String,
        #[serde(default = "default_connect_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_connect_timeout_ms() -> u64 {
    2000
}

/// A running source. Iterating yields frames until end-of-stream; a read error
/// is yielded once and ends the stream.
pub struct SourceHandle {
    descriptor: DeviceDescriptor,
    rx: Receiver<Result<SampleFrame>>,
    finished: bool,
    worker: Option<JoinHandle<()>>,
}

impl SourceHandle {
    pub fn descriptor(&self) -> &DeviceDescriptor {
        &self.descriptor
    }

    pub(crate) fn spawn<I>(descriptor: DeviceDescriptor, capacity: usize, frames: I) -> Self
    where
        I: Iterator<Item = Result<SampleFrame>> + Send + 'static,
    {
        let (tx, rx) = mpsc::sync_channel(capacity.max(1));
        let worker = std::thread::Builder::new()
            .name("acquisition".into())
            .spawn(move || {
                for item in frames {
                    let stop = item.is_err();
                    if tx.send(item).is_err() || stop {
                        break;
                    }
                }
            })
            .expect("spawn acquisition thread");
        Self { descriptor, rx, finished: false, worker: Some(worker) }
    }
}

impl Iterator for SourceHandle {
    type Item = Result<SampleFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        match self.rx.recv() {
            Ok(Ok(frame)) => Some(Ok(frame)),
            Ok(Err(e)) => {
                self.finished = true;
                Some(Err(e))
            }
            Err(_) => {
                self.finished = true;
                if let Some(w) = self.worker.take() {
                    let _ = w.join();
                }
                None
            }
        }
    }
}

/// Opens a source described by `config`.
pub fn open_source(config: &SourceConfig) -> Result<SourceHandle> {
    open_source_with_capacity(config, DEFAULT_QUEUE_CAPACITY)
}

pub fn open_source_with_capacity(config: &SourceConfig, capacity: usize) -> Result<SourceHandle> {
    match config {
        SourceConfig::Replay { path, pace } => {
            let reader = ReplayReader::open(path)?;
            let descriptor = reader.descriptor().clone();
            let frames = Paced::new(reader, *pace);
            Ok(SourceHandle::spawn(descriptor, capacity, frames))
        }
        SourceConfig::Synthetic { spec, seed, pace } => {
            let descriptor = spec.descriptor();
            descriptor.validate()?;
            let stream = synth_signal(spec, *seed)?;
            Ok(SourceHandle::spawn(descriptor, capacity, Paced::new(stream.map(Ok), *pace)))
        }
        SourceConfig::Socket { address, timeout_ms } => {
            let reader = socket::connect(address, Duration::from_millis(*timeout_ms))?;
            let descriptor = reader.descriptor().clone();
            Ok(SourceHandle::spawn(descriptor, capacity, reader))
        }
    }
}

/// Optionally sleeps so frames are released at their recorded cadence.
struct Paced<I> {
    inner: I,
    pace: bool,
    origin: Option<(f64, std::time::Instant)>,
}

impl<I> Paced<I> {
    fn new(inner: I, pace: bool) -> Self {
        Self { inner, pace, origin: None }
    }
}

impl<I: Iterator<Item = Result<SampleFrame>>> Iterator for Paced<I> {
    type Item = Result<SampleFrame>;

    fn next(&mut self) -> Option<Self::Item> {
        let item = self.inner.next()?;
        if self.pace {
            if let Ok(frame) = &item {
                let (t0, start) = *self.origin.get_or_insert((frame.t, std::time::Instant::now()));
                let due = Duration::from_secs_f64((frame.t - t0).max(0.0));
                let elapsed = start.elapsed();
                if due > elapsed {
                    std::thread::sleep(due - elapsed);
                }
            }
        }
        Some(item)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_validation() {
        let d = DeviceDescriptor::with_layout("muse", 4, 1, 256.0);
        d.validate().unwrap();
        assert_eq!(d.channels_of(ChannelKind::Ppg), vec![4]);

        let mut bad = d.clone();
        bad.channel_roles.pop();
        assert!(bad.validate().is_err());

        let tiny = DeviceDescriptor::with_layout("tiny", 2, 0, 256.0);
        assert!(tiny.validate().is_err());

        let mut dup = d.clone();
        dup.channel_roles[1].index = 0;
        assert!(dup.validate().is_err());

        let mut rate = d;
        rate.sample_rate_hz = 0.0;
        assert!(rate.validate().is_err());
    }

    #[test]
    fn synthetic_source_zero_duration_ends_cleanly() {
        let spec = SynthSpec::muse_like(0.0, 256.0, 0.0);
        let mut handle =
            open_source(&SourceConfig::Synthetic { spec, seed: 1, pace: false }).unwrap();
        assert!(handle.next().is_none());
        assert!(handle.next().is_none());
    }

    #[test]
    fn missing_replay_file_is_open_error() {
        let err = open_source(&SourceConfig::Replay {
            path: "/nonexistent/replay.csv".into(),
            pace: false,
        })
        .err()
        .unwrap();
        assert!(matches!(err, AcquisitionError::Open { .. }));
    }

    #[test]
    fn socket_to_closed_port_fails_within_timeout() {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let start = std::time::Instant::now();
        let err = open_source(&SourceConfig::Socket { address: addr.to_string(), timeout_ms: 500 })
            .err()
            .unwrap();
        assert!(matches!(err, AcquisitionError::Transport(_)));
        assert!(start.elapsed() < Duration::from_secs(2));
    }
}
