use std::collections::BTreeMap;

use chrono::{Datelike, TimeZone};
use chrono_tz::Tz;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acquisition::DeviceDescriptor;
use crate::dsp::EpochMetrics;
use crate::embeddings::{EmbeddingVector, Modality};

/// `YYYYMMDD` of `t` in `tz`.
pub fn day_key(t: f64, tz: Tz) -> u32 {
    let secs = t.floor() as i64;
    let dt = tz.timestamp_opt(secs, 0).single().unwrap_or_else(|| {
        tz.from_utc_datetime(&chrono::DateTime::UNIX_EPOCH.naive_utc())
    });
    dt.year() as u32 * 10_000 + dt.month() * 100 + dt.day()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: u64,
    pub session_day: u32,
    pub t_start: f64,
    pub t_end: f64,
    pub epoch_count: u64,
    pub device: DeviceDescriptor,
    /// Still receiving epochs.
    pub open: bool,
}

impl SessionRecord {
    pub fn duration_s(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_start && t <= self.t_end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub(crate) enum SessionEvent {
    Open { session_id: u64, session_day: u32, t_start: f64, device: DeviceDescriptor },
    Close { session_id: u64, t_end: f64 },
}

/// One stored epoch: timing, quality and the metric vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub session_id: u64,
    pub t_start: f64,
    pub window_s: f64,
    pub quality: f64,
    pub metrics: EpochMetrics<f64>,
}

impl EpochRecord {
    pub fn t_end(&self) -> f64 {
        self.t_start + self.window_s
    }
}

/// Input to [`crate::store::Store::append_epoch`].
#[derive(Debug, Clone, PartialEq)]
pub struct NewEpoch {
    pub t_start: f64,
    pub window_s: f64,
    pub quality: f64,
    pub metrics: EpochMetrics<f64>,
}

impl<T: crate::scalar::Real> From<&crate::dsp::ProcessedEpoch<T>> for NewEpoch {
    fn from(p: &crate::dsp::ProcessedEpoch<T>) -> Self {
        Self {
            t_start: p.epoch.t_start,
            window_s: p.epoch.window_s,
            quality: p.epoch.quality,
            metrics: p.metrics.map(|v| v.to_f64_lossy()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub label_id: u64,
    pub text: String,
    pub t: f64,
    pub window_s: f64,
    pub session_day: u32,
    /// Mean of each available metric over `[t - window_s, t]`.
    pub metric_snapshot: BTreeMap<String, f64>,
    pub embedding: EmbeddingVector<f64>,
}

/// Persisted label line; the embedding lives in the binary embedding file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct LabelLine {
    pub label_id: u64,
    pub text: String,
    pub t: f64,
    pub window_s: f64,
    pub session_day: u32,
    pub metric_snapshot: BTreeMap<String, f64>,
}

/// What an embedding is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbeddingRef {
    Label { label_id: u64 },
    Window { session_id: u64, t_start: f64, window_s: f64 },
}

impl EmbeddingRef {
    pub fn time(&self) -> Option<f64> {
        match self {
            EmbeddingRef::Window { t_start, .. } => Some(*t_start),
            EmbeddingRef::Label { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredEmbedding {
    #[serde(rename = "ref")]
    pub reference: EmbeddingRef,
    pub vector: EmbeddingVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct IndexLine {
    #[serde(rename = "ref")]
    pub reference: EmbeddingRef,
    pub modality: Modality,
    pub model_id: String,
    pub dim: usize,
    /// Byte offset into `embeddings.bin`.
    pub offset: u64,
    pub created_at: f64,
    /// sha256 of the little-endian value bytes.
    pub values_sha256: String,
}

/// A record plus the sha256 of its canonical JSON, one per line on disk.
#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct Sealed<R> {
    #[serde(flatten)]
    pub record: R,
    pub sha256: String,
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub(crate) fn seal<R: Serialize>(record: &R) -> String {
    let mut body = serde_json::to_string(record).expect("records serialize");
    debug_assert!(body.starts_with('{') && body.len() > 2, "records are non-empty objects");
    let hash = sha256_hex(body.as_bytes());
    body.pop();
    body.push_str(",\"sha256\":\"");
    body.push_str(&hash);
    body.push_str("\"}");
    body
}

/// Parses a sealed line and checks its hash.
pub(crate) fn unseal<R: Serialize + DeserializeOwned>(line: &str) -> Result<R, String> {
    let sealed: Sealed<R> = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let body = serde_json::to_vec(&sealed.record).map_err(|e| e.to_string())?;
    if sha256_hex(&body) != sealed.sha256 {
        return Err("record hash mismatch".into());
    }
    Ok(sealed.record)
}

pub(crate) fn values_to_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub(crate) fn values_from_bytes(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect()
}
