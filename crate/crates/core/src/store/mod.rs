//! Append-only local persistence for sessions, epochs, labels and embeddings.
//!
//! On-disk layout under the store root:
//!
//! ```text
//! format_version            "1"
//! owner.token               deletion secret, mode 0600
//! counters.json             id watermarks (label ids are never reused)
//! days/YYYYMMDD/
//!     sessions.jsonl        open/close events
//!     epochs.jsonl          epoch timing, quality and metrics
//!     labels.jsonl          label text, window and metric snapshot
//!     embeddings.bin        f64 little-endian vectors, concatenated
//!     embeddings.idx.jsonl  one index entry per vector
//! ```
//!
//! Every JSON line carries the sha256 of its record; records are checked when
//! the store is opened and by [`Store::verify`]. The only path that rewrites
//! files is [`Store::delete`].

mod records;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono_tz::Tz;
use parking_lot::RwLock;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use records::{
    day_key, EmbeddingRef, EpochRecord, LabelRecord, NewEpoch, SessionRecord, StoredEmbedding,
};
use records::{
    seal, sha256_hex, unseal, values_from_bytes, values_to_bytes, IndexLine, LabelLine, SessionEvent,
};

use crate::acquisition::DeviceDescriptor;
use crate::dsp::EpochMetrics;
use crate::embeddings::{EmbeddingError, EmbeddingVector, NgramEmbedder, TextEmbedder};

pub const FORMAT_VERSION: &str = "1";
pub const DEFAULT_IDLE_GAP_S: f64 = 120.0;
pub const DEFAULT_LABEL_WINDOW_S: f64 = 18.0;
pub const DEFAULT_HORIZON_S: f64 = 60.0;

const SESSIONS_FILE: &str = "sessions.jsonl";
const EPOCHS_FILE: &str = "epochs.jsonl";
const LABELS_FILE: &str = "labels.jsonl";
const EMBEDDINGS_BIN: &str = "embeddings.bin";
const EMBEDDINGS_IDX: &str = "embeddings.idx.jsonl";
const TOKEN_FILE: &str = "owner.token";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("unsupported store format {found:?}, expected {FORMAT_VERSION}")]
    Format { found: String },
    #[error("label text is empty")]
    EmptyText,
    #[error("deletion is reserved to the owner")]
    OwnerOnly,
    #[error("owner token does not match")]
    BadToken,
    #[error("invalid range: {0}")]
    Range(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone)]
pub struct StoreConfig {
    /// Zone used for `session_day` keys.
    pub day_tz: Tz,
    /// Gap between epochs that closes the open session.
    pub idle_gap_s: f64,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self { day_tz: chrono_tz::UTC, idle_gap_s: DEFAULT_IDLE_GAP_S }
    }
}

/// Which interface a destructive request arrived on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Surface {
    Owner,
    Agent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scope", rename_all = "lowercase")]
pub enum DeleteScope {
    All,
    /// Records whose time falls in `[t_start, t_end)`; sessions entirely inside.
    Range { t_start: f64, t_end: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeleteSummary {
    pub sessions: usize,
    pub epochs: usize,
    pub labels: usize,
    pub embeddings: usize,
}

impl DeleteSummary {
    pub fn total(&self) -> usize {
        self.sessions + self.epochs + self.labels + self.embeddings
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelBrief {
    pub label_id: u64,
    pub text: String,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub t: f64,
    pub horizon_s: f64,
    /// Set when no epoch falls inside the horizon.
    pub no_data: bool,
    pub epoch_count: usize,
    pub metrics: Option<EpochMetrics<f64>>,
    pub last_label: Option<LabelBrief>,
    pub active_session: Option<SessionRecord>,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
struct Counters {
    next_session_id: u64,
    next_label_id: u64,
}

#[derive(Debug, Default, Clone)]
struct Inner {
    sessions: BTreeMap<u64, SessionRecord>,
    active: Option<u64>,
    /// Sorted by `t_start`.
    epochs: Vec<EpochRecord>,
    labels: BTreeMap<u64, LabelRecord>,
    /// EXG window embeddings, in insertion order.
    windows: Vec<StoredEmbedding>,
    counters: Counters,
}

impl Inner {
    fn range(&self, t0: f64, t1: f64) -> &[EpochRecord] {
        let lo = self.epochs.partition_point(|e| e.t_start < t0);
        let hi = self.epochs.partition_point(|e| e.t_start < t1);
        &self.epochs[lo..hi.max(lo)]
    }

    fn closed_range(&self, t0: f64, t1: f64) -> &[EpochRecord] {
        let lo = self.epochs.partition_point(|e| e.t_start < t0);
        let hi = self.epochs.partition_point(|e| e.t_start <= t1);
        &self.epochs[lo..hi.max(lo)]
    }

    fn insert_epoch(&mut self, rec: EpochRecord) {
        let at = self.epochs.partition_point(|e| e.t_start <= rec.t_start);
        self.epochs.insert(at, rec);
    }

    fn session_day_of(&self, session_id: u64) -> Option<u32> {
        self.sessions.get(&session_id).map(|s| s.session_day)
    }
}

/// Handle on a store directory. Cheap to share behind an `Arc`.
pub struct Store {
    root: PathBuf,
    config: StoreConfig,
    inner: RwLock<Inner>,
    text: Arc<dyn TextEmbedder<f64>>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("root", &self.root).field("config", &self.config).finish()
    }
}

impl Store {
    /// Opens (creating if needed) the store at `root` with the built-in text embedder.
    pub fn open(root: impl AsRef<Path>, config: StoreConfig) -> Result<Self> {
        Self::open_with(root, config, Arc::new(NgramEmbedder::new()))
    }

    pub fn open_with(
        root: impl AsRef<Path>,
        config: StoreConfig,
        text: Arc<dyn TextEmbedder<f64>>,
    ) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("days")).map_err(io_err(&root))?;
        let version = root.join("format_version");
        match fs::read_to_string(&version) {
            Ok(found) if found.trim() == FORMAT_VERSION => {}
            Ok(found) => return Err(StoreError::Format { found: found.trim().into() }),
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                fs::write(&version, format!("{FORMAT_VERSION}\n")).map_err(io_err(&version))?
            }
            Err(e) => return Err(io_err(&version)(e)),
        }
        ensure_token(&root.join(TOKEN_FILE))?;
        let inner = load(&root)?;
        Ok(Self { root, config, inner: RwLock::new(inner), text })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn text_embedder(&self) -> &dyn TextEmbedder<f64> {
        self.text.as_ref()
    }

    pub fn owner_token_path(&self) -> PathBuf {
        self.root.join(TOKEN_FILE)
    }

    /// Reads the owner secret; only local processes with file access can do this.
    pub fn read_owner_token(&self) -> Result<String> {
        let p = self.owner_token_path();
        Ok(fs::read_to_string(&p).map_err(io_err(&p))?.trim().to_string())
    }

    pub fn day_key(&self, t: f64) -> u32 {
        day_key(t, self.config.day_tz)
    }

    fn day_dir(&self, day: u32) -> PathBuf {
        self.root.join("days").join(day.to_string())
    }

    fn append_line(&self, day: u32, file: &str, line: &str) -> Result<()> {
        let dir = self.day_dir(day);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join(file);
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(io_err(&path))?;
        f.write_all(format!("{line}\n").as_bytes()).map_err(io_err(&path))
    }

    fn append_embedding(&self, day: u32, reference: EmbeddingRef, v: &EmbeddingVector<f64>) -> Result<()> {
        let dir = self.day_dir(day);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let bin = dir.join(EMBEDDINGS_BIN);
        let mut f = OpenOptions::new().create(true).append(true).open(&bin).map_err(io_err(&bin))?;
        let offset = f.metadata().map_err(io_err(&bin))?.len();
        let bytes = values_to_bytes(&v.values);
        f.write_all(&bytes).map_err(io_err(&bin))?;
        let idx = IndexLine {
            reference,
            modality: v.modality,
            model_id: v.model_id.clone(),
            dim: v.dim(),
            offset,
            created_at: v.created_at,
            values_sha256: sha256_hex(&bytes),
        };
        self.append_line(day, EMBEDDINGS_IDX, &seal(&idx))
    }

    fn save_counters(&self, c: &Counters) -> Result<()> {
        let path = self.root.join("counters.json");
        write_atomic(&path, serde_json::to_string(c).expect("counters serialize").as_bytes())
    }

    fn open_session_locked(&self, inner: &mut Inner, device: &DeviceDescriptor, t: f64) -> Result<u64> {
        let id = inner.counters.next_session_id;
        inner.counters.next_session_id += 1;
        self.save_counters(&inner.counters)?;
        let day = self.day_key(t);
        let ev = SessionEvent::Open { session_id: id, session_day: day, t_start: t, device: device.clone() };
        self.append_line(day, SESSIONS_FILE, &seal(&ev))?;
        inner.sessions.insert(
            id,
            SessionRecord {
                session_id: id,
                session_day: day,
                t_start: t,
                t_end: t,
                epoch_count: 0,
                device: device.clone(),
                open: true,
            },
        );
        inner.active = Some(id);
        Ok(id)
    }

    fn close_session_locked(&self, inner: &mut Inner, t_end: Option<f64>) -> Result<Option<SessionRecord>> {
        let Some(id) = inner.active.take() else { return Ok(None) };
        let s = inner.sessions.get_mut(&id).expect("active session exists");
        if let Some(t) = t_end {
            s.t_end = s.t_end.max(t);
        }
        s.open = false;
        let s = s.clone();
        self.append_line(s.session_day, SESSIONS_FILE, &seal(&SessionEvent::Close { session_id: id, t_end: s.t_end }))?;
        Ok(Some(s))
    }

    /// Closes any open session and opens a new one at `t`.
    pub fn open_session(&self, device: &DeviceDescriptor, t: f64) -> Result<SessionRecord> {
        let mut inner = self.inner.write();
        self.close_session_locked(&mut inner, None)?;
        let id = self.open_session_locked(&mut inner, device, t)?;
        Ok(inner.sessions[&id].clone())
    }

    /// Closes the open session, extending its end to `t_end` if later.
    pub fn close_session(&self, t_end: Option<f64>) -> Result<Option<SessionRecord>> {
        let mut inner = self.inner.write();
        self.close_session_locked(&mut inner, t_end)
    }

    /// Appends one epoch, opening or rolling over the session as needed.
    ///
    /// A new session starts when none is open, the day key changes, the gap
    /// since the last epoch exceeds the idle limit, or the device changes.
    pub fn append_epoch(
        &self,
        device: &DeviceDescriptor,
        epoch: NewEpoch,
        embedding: Option<EmbeddingVector<f64>>,
    ) -> Result<EpochRecord> {
        if let Some(v) = &embedding {
            if !v.is_unit() {
                return Err(EmbeddingError::Degenerate.into());
            }
        }
        let mut inner = self.inner.write();
        let day = self.day_key(epoch.t_start);
        let rollover = match inner.active.map(|id| &inner.sessions[&id]) {
            None => true,
            Some(s) => {
                s.session_day != day
                    || epoch.t_start - s.t_end > self.config.idle_gap_s
                    || s.device.name != device.name
            }
        };
        if rollover {
            self.close_session_locked(&mut inner, None)?;
            self.open_session_locked(&mut inner, device, epoch.t_start)?;
        }
        let id = inner.active.expect("session open");
        let rec = EpochRecord {
            session_id: id,
            t_start: epoch.t_start,
            window_s: epoch.window_s,
            quality: epoch.quality,
            metrics: epoch.metrics,
        };
        let session_day = inner.sessions[&id].session_day;
        self.append_line(session_day, EPOCHS_FILE, &seal(&rec))?;
        if let Some(v) = embedding {
            let reference = EmbeddingRef::Window { session_id: id, t_start: rec.t_start, window_s: rec.window_s };
            self.append_embedding(session_day, reference, &v)?;
            inner.windows.push(StoredEmbedding { reference, vector: v });
        }
        let s = inner.sessions.get_mut(&id).expect("session exists");
        s.epoch_count += 1;
        s.t_end = s.t_end.max(rec.t_end());
        inner.insert_epoch(rec.clone());
        Ok(rec)
    }

    /// Embeds `text`, snapshots metrics over `[t - window_s, t]` and stores the label.
    pub fn add_label(&self, text: &str, window_s: f64, t: f64) -> Result<LabelRecord> {
        let text = text.trim();
        if text.is_empty() {
            return Err(StoreError::EmptyText);
        }
        if !(window_s >= 0.0) || !t.is_finite() {
            return Err(StoreError::Range(format!("window {window_s} at {t}")));
        }
        let embedding = self.text.embed_text(text, t)?;
        let mut inner = self.inner.write();
        let metric_snapshot = snapshot_means(inner.closed_range(t - window_s, t));
        let label_id = inner.counters.next_label_id.max(1);
        inner.counters.next_label_id = label_id + 1;
        self.save_counters(&inner.counters)?;
        let line = LabelLine {
            label_id,
            text: text.to_string(),
            t,
            window_s,
            session_day: self.day_key(t),
            metric_snapshot,
        };
        self.append_line(line.session_day, LABELS_FILE, &seal(&line))?;
        self.append_embedding(line.session_day, EmbeddingRef::Label { label_id }, &embedding)?;
        let rec = label_from_line(line, embedding);
        inner.labels.insert(label_id, rec.clone());
        Ok(rec)
    }

    /// All sessions, most recent day first, then most recent start first.
    pub fn sessions(&self) -> Vec<SessionRecord> {
        let mut v: Vec<_> = self.inner.read().sessions.values().cloned().collect();
        v.sort_by(|a, b| {
            b.session_day
                .cmp(&a.session_day)
                .then(b.t_start.total_cmp(&a.t_start))
                .then(b.session_id.cmp(&a.session_id))
        });
        v
    }

    pub fn session(&self, id: u64) -> Option<SessionRecord> {
        self.inner.read().sessions.get(&id).cloned()
    }

    pub fn active_session(&self) -> Option<SessionRecord> {
        let inner = self.inner.read();
        inner.active.map(|id| inner.sessions[&id].clone())
    }

    /// Epochs with `t_start` in `[t0, t1)`.
    pub fn epochs_between(&self, t0: f64, t1: f64) -> Vec<EpochRecord> {
        self.inner.read().range(t0, t1).to_vec()
    }

    /// Runs `f` over the epochs with `t_start` in `[t0, t1)` without copying them.
    pub fn with_epochs<R>(&self, t0: f64, t1: f64, f: impl FnOnce(&[EpochRecord]) -> R) -> R {
        f(self.inner.read().range(t0, t1))
    }

    pub fn epoch_count(&self) -> usize {
        self.inner.read().epochs.len()
    }

    /// Labels in id order.
    pub fn labels(&self) -> Vec<LabelRecord> {
        self.inner.read().labels.values().cloned().collect()
    }

    pub fn label(&self, id: u64) -> Option<LabelRecord> {
        self.inner.read().labels.get(&id).cloned()
    }

    /// The `n` most recent labels by time, newest first.
    pub fn recent_labels(&self, n: usize) -> Vec<LabelRecord> {
        let mut v = self.labels();
        v.sort_by(|a, b| b.t.total_cmp(&a.t).then(b.label_id.cmp(&a.label_id)));
        v.truncate(n);
        v
    }

    /// Stored EXG window embeddings.
    pub fn window_embeddings(&self) -> Vec<StoredEmbedding> {
        self.inner.read().windows.clone()
    }

    /// Mean metrics over the `horizon_s` seconds ending at `at`.
    pub fn get_state(&self, horizon_s: f64, at: f64) -> StateSnapshot {
        let inner = self.inner.read();
        let window = inner.closed_range(at - horizon_s, at);
        let metrics = mean_metrics(window);
        let last_label = inner
            .labels
            .values()
            .filter(|l| l.t <= at)
            .max_by(|a, b| a.t.total_cmp(&b.t).then(a.label_id.cmp(&b.label_id)))
            .map(|l| LabelBrief { label_id: l.label_id, text: l.text.clone(), t: l.t });
        StateSnapshot {
            t: at,
            horizon_s,
            no_data: metrics.is_none(),
            epoch_count: window.len(),
            metrics,
            last_label,
            active_session: inner.active.map(|id| inner.sessions[&id].clone()),
        }
    }

    /// Physically removes records. Refused on the agent surface or with a wrong token.
    pub fn delete(&self, scope: DeleteScope, token: Option<&str>, surface: Surface) -> Result<DeleteSummary> {
        if surface != Surface::Owner {
            return Err(StoreError::OwnerOnly);
        }
        let expected = self.read_owner_token()?;
        match token {
            Some(t) if constant_time_eq(t.trim().as_bytes(), expected.as_bytes()) => {}
            _ => return Err(StoreError::BadToken),
        }
        let (t0, t1) = match scope {
            DeleteScope::All => (f64::NEG_INFINITY, f64::INFINITY),
            DeleteScope::Range { t_start, t_end } => {
                if !(t_start < t_end) {
                    return Err(StoreError::Range(format!("{t_start} >= {t_end}")));
                }
                (t_start, t_end)
            }
        };
        let inside = |t: f64| t >= t0 && t < t1;
        let mut inner = self.inner.write();
        let mut summary = DeleteSummary::default();
        let mut touched: BTreeSet<u32> = BTreeSet::new();

        let gone_sessions: Vec<u64> = inner
            .sessions
            .values()
            .filter(|s| s.t_start >= t0 && s.t_end <= t1)
            .map(|s| s.session_id)
            .collect();
        for id in &gone_sessions {
            let s = inner.sessions.remove(id).expect("listed");
            touched.insert(s.session_day);
            if inner.active == Some(*id) {
                inner.active = None;
            }
        }
        summary.sessions = gone_sessions.len();

        let before = inner.epochs.len();
        let mut epoch_days = Vec::new();
        let sessions = inner.sessions.clone();
        inner.epochs.retain(|e| {
            let drop = inside(e.t_start) || !sessions.contains_key(&e.session_id);
            if drop {
                epoch_days.push(e.session_id);
            }
            !drop
        });
        summary.epochs = before - inner.epochs.len();

        let before = inner.windows.len();
        inner.windows.retain(|w| match w.reference {
            EmbeddingRef::Window { session_id, t_start, .. } => {
                let drop = inside(t_start) || !sessions.contains_key(&session_id);
                if drop {
                    epoch_days.push(session_id);
                }
                !drop
            }
            EmbeddingRef::Label { .. } => true,
        });
        summary.embeddings = before - inner.windows.len();

        let gone_labels: Vec<u64> = inner.labels.values().filter(|l| inside(l.t)).map(|l| l.label_id).collect();
        for id in &gone_labels {
            let l = inner.labels.remove(id).expect("listed");
            touched.insert(l.session_day);
        }
        summary.labels = gone_labels.len();
        summary.embeddings += gone_labels.len();

        // Removed sessions' days are already in `touched`.
        for sid in epoch_days {
            if let Some(d) = inner.session_day_of(sid) {
                touched.insert(d);
            }
        }
        if t1.is_infinite() && t0.is_infinite() {
            touched.extend(list_days(&self.root)?);
        }

        let mut counts: HashMap<u64, u64> = HashMap::new();
        for e in &inner.epochs {
            *counts.entry(e.session_id).or_default() += 1;
        }
        for s in inner.sessions.values_mut() {
            s.epoch_count = counts.get(&s.session_id).copied().unwrap_or(0);
        }
        for day in touched {
            self.rewrite_day(&inner, day)?;
        }
        Ok(summary)
    }

    fn rewrite_day(&self, inner: &Inner, day: u32) -> Result<()> {
        let dir = self.day_dir(day);
        let sessions: Vec<&SessionRecord> = inner.sessions.values().filter(|s| s.session_day == day).collect();
        let ids: BTreeSet<u64> = sessions.iter().map(|s| s.session_id).collect();
        let labels: Vec<&LabelRecord> = inner.labels.values().filter(|l| l.session_day == day).collect();
        let epochs: Vec<&EpochRecord> = inner.epochs.iter().filter(|e| ids.contains(&e.session_id)).collect();
        if sessions.is_empty() && labels.is_empty() {
            if dir.exists() {
                fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
            }
            return Ok(());
        }
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;

        let mut text = String::new();
        for s in &sessions {
            let open = SessionEvent::Open {
                session_id: s.session_id,
                session_day: s.session_day,
                t_start: s.t_start,
                device: s.device.clone(),
            };
            text.push_str(&seal(&open));
            text.push('\n');
            if !s.open {
                text.push_str(&seal(&SessionEvent::Close { session_id: s.session_id, t_end: s.t_end }));
                text.push('\n');
            }
        }
        write_atomic(&dir.join(SESSIONS_FILE), text.as_bytes())?;

        let text: String = epochs.iter().map(|e| seal(*e) + "\n").collect();
        write_atomic(&dir.join(EPOCHS_FILE), text.as_bytes())?;

        let mut text = String::new();
        for l in &labels {
            text.push_str(&seal(&label_line(l)));
            text.push('\n');
        }
        write_atomic(&dir.join(LABELS_FILE), text.as_bytes())?;

        let mut bin = Vec::new();
        let mut idx = String::new();
        let mut push = |reference: EmbeddingRef, v: &EmbeddingVector<f64>| {
            let bytes = values_to_bytes(&v.values);
            let line = IndexLine {
                reference,
                modality: v.modality,
                model_id: v.model_id.clone(),
                dim: v.dim(),
                offset: bin.len() as u64,
                created_at: v.created_at,
                values_sha256: sha256_hex(&bytes),
            };
            bin.extend_from_slice(&bytes);
            idx.push_str(&seal(&line));
            idx.push('\n');
        };
        for w in &inner.windows {
            if let EmbeddingRef::Window { session_id, .. } = w.reference {
                if ids.contains(&session_id) {
                    push(w.reference, &w.vector);
                }
            }
        }
        for l in &labels {
            push(EmbeddingRef::Label { label_id: l.label_id }, &l.embedding);
        }
        write_atomic(&dir.join(EMBEDDINGS_BIN), &bin)?;
        write_atomic(&dir.join(EMBEDDINGS_IDX), idx.as_bytes())
    }

    /// Re-reads every file and checks hashes and the unit-norm invariant.
    pub fn verify(&self) -> Result<()> {
        load(&self.root).map(|_| ())
    }

    /// sha256 over every file under the root (relative path and bytes), in path order.
    pub fn content_hash(&self) -> Result<String> {
        let mut files = Vec::new();
        walk(&self.root, &mut files)?;
        files.sort();
        let mut h = Sha256::new();
        for path in files {
            let rel = path.strip_prefix(&self.root).unwrap_or(&path);
            h.update(rel.to_string_lossy().as_bytes());
            h.update([0u8]);
            let mut buf = Vec::new();
            File::open(&path).and_then(|mut f| f.read_to_end(&mut buf)).map_err(io_err(&path))?;
            h.update((buf.len() as u64).to_le_bytes());
            h.update(&buf);
        }
        Ok(hex::encode(h.finalize()))
    }
}

fn label_line(l: &LabelRecord) -> LabelLine {
    LabelLine {
        label_id: l.label_id,
        text: l.text.clone(),
        t: l.t,
        window_s: l.window_s,
        session_day: l.session_day,
        metric_snapshot: l.metric_snapshot.clone(),
    }
}

fn label_from_line(l: LabelLine, embedding: EmbeddingVector<f64>) -> LabelRecord {
    LabelRecord {
        label_id: l.label_id,
        text: l.text,
        t: l.t,
        window_s: l.window_s,
        session_day: l.session_day,
        metric_snapshot: l.metric_snapshot,
        embedding,
    }
}

/// Plain means of every metric; `None` for an empty slice.
pub fn mean_metrics(epochs: &[EpochRecord]) -> Option<EpochMetrics<f64>> {
    if epochs.is_empty() {
        return None;
    }
    let n = EpochMetrics::<f64>::NAMES.len();
    let mut acc = vec![0.0; n];
    for e in epochs {
        for (a, v) in acc.iter_mut().zip(e.metrics.values()) {
            *a += v;
        }
    }
    let len = epochs.len() as f64;
    EpochMetrics::from_values(&acc.iter().map(|a| a / len).collect::<Vec<_>>())
}

/// Per-metric means over the epochs where the metric is non-zero; metrics that
/// are zero throughout (unavailable) are omitted.
pub fn snapshot_means(epochs: &[EpochRecord]) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for (i, name) in EpochMetrics::<f64>::NAMES.iter().enumerate() {
        let (sum, n) = epochs
            .iter()
            .map(|e| e.metrics.values()[i])
            .filter(|v| *v != 0.0 && v.is_finite())
            .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        if n > 0 {
            out.insert((*name).to_string(), sum / n as f64);
        }
    }
    out
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

fn ensure_token(path: &Path) -> Result<()> {
    if path.exists() {
        return Ok(());
    }
    let secret: [u8; 32] = rand::rng().random();
    let mut opts = OpenOptions::new();
    opts.write(true).create_new(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        opts.mode(0o600);
    }
    let mut f = opts.open(path).map_err(io_err(path))?;
    f.write_all(format!("{}\n", hex::encode(secret)).as_bytes()).map_err(io_err(path))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_dir() {
            walk(&path, out)?;
        } else if path.extension().is_none_or(|e| e != "tmp") {
            out.push(path);
        }
    }
    Ok(())
}

fn list_days(root: &Path) -> Result<Vec<u32>> {
    let dir = root.join("days");
    let mut days = Vec::new();
    for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
        let entry = entry.map_err(io_err(&dir))?;
        if let Some(d) = entry.file_name().to_str().and_then(|s| s.parse().ok()) {
            days.push(d);
        }
    }
    days.sort_unstable();
    Ok(days)
}

/// Numbered complete lines of a file; a torn final line (no newline) is skipped.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    let mut out = Vec::new();
    let mut reader = BufReader::new(f);
    let mut n = 0;
    loop {
        let mut line = String::new();
        let read = reader.read_line(&mut line).map_err(io_err(path))?;
        if read == 0 {
            break;
        }
        n += 1;
        if !line.ends_with('\n') {
            log::warn!("{}:{n}: ignoring torn trailing line", path.display());
            break;
        }
        let line = line.trim_end();
        if !line.is_empty() {
            out.push((n, line.to_string()));
        }
    }
    Ok(out)
}

fn read_sealed<R: Serialize + serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<R>> {
    read_lines(path)?
        .into_iter()
        .map(|(line, text)| {
            unseal(&text).map_err(|message| StoreError::Corrupt { path: path.to_path_buf(), line, message })
        })
        .collect()
}

fn load(root: &Path) -> Result<Inner> {
    let counters_path = root.join("counters.json");
    let mut inner = Inner {
        counters: match fs::read_to_string(&counters_path) {
            Ok(s) => serde_json::from_str(&s).map_err(|e| StoreError::Corrupt {
                path: counters_path.clone(),
                line: 1,
                message: e.to_string(),
            })?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Counters::default(),
            Err(e) => return Err(io_err(&counters_path)(e)),
        },
        ..Inner::default()
    };
    let mut label_vectors: HashMap<u64, EmbeddingVector<f64>> = HashMap::new();
    let mut label_lines = Vec::new();
    for day in list_days(root)? {
        let dir = root.join("days").join(day.to_string());
        for ev in read_sealed::<SessionEvent>(&dir.join(SESSIONS_FILE))? {
            match ev {
                SessionEvent::Open { session_id, session_day, t_start, device } => {
                    inner.sessions.insert(
                        session_id,
                        SessionRecord {
                            session_id,
                            session_day,
                            t_start,
                            t_end: t_start,
                            epoch_count: 0,
                            device,
                            open: true,
                        },
                    );
                }
                SessionEvent::Close { session_id, t_end } => {
                    if let Some(s) = inner.sessions.get_mut(&session_id) {
                        s.t_end = s.t_end.max(t_end);
                        s.open = false;
                    }
                }
            }
        }
        for rec in read_sealed::<EpochRecord>(&dir.join(EPOCHS_FILE))? {
            inner.epochs.push(rec);
        }
        label_lines.extend(read_sealed::<LabelLine>(&dir.join(LABELS_FILE))?);

        let bin_path = dir.join(EMBEDDINGS_BIN);
        let bin = match fs::read(&bin_path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(&bin_path)(e)),
        };
        let idx_path = dir.join(EMBEDDINGS_IDX);
        for (line_no, text) in read_lines(&idx_path)? {
            let corrupt = |message: String| StoreError::Corrupt { path: idx_path.clone(), line: line_no, message };
            let idx: IndexLine = unseal(&text).map_err(corrupt)?;
            let start = idx.offset as usize;
            let end = start + idx.dim * 8;
            let bytes = bin.get(start..end).ok_or_else(|| corrupt("vector beyond end of file".into()))?;
            if sha256_hex(bytes) != idx.values_sha256 {
                return Err(corrupt("vector hash mismatch".into()));
            }
            let vector = EmbeddingVector {
                values: values_from_bytes(bytes),
                modality: idx.modality,
                model_id: idx.model_id,
                created_at: idx.created_at,
            };
            if !vector.is_unit() {
                return Err(corrupt("stored embedding is not unit norm".into()));
            }
            match idx.reference {
                EmbeddingRef::Label { label_id } => {
                    label_vectors.insert(label_id, vector);
                }
                r @ EmbeddingRef::Window { .. } => inner.windows.push(StoredEmbedding { reference: r, vector }),
            }
        }
    }
    for line in label_lines {
        let Some(v) = label_vectors.remove(&line.label_id) else {
            return Err(StoreError::Corrupt {
                path: root.join("days").join(line.session_day.to_string()).join(EMBEDDINGS_IDX),
                line: 0,
                message: format!("label #{} has no embedding", line.label_id),
            });
        };
        inner.counters.next_label_id = inner.counters.next_label_id.max(line.label_id + 1);
        inner.labels.insert(line.label_id, label_from_line(line, v));
    }
    inner.epochs.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
    let mut counts: HashMap<u64, (u64, f64)> = HashMap::new();
    for e in &inner.epochs {
        let c = counts.entry(e.session_id).or_insert((0, f64::NEG_INFINITY));
        c.0 += 1;
        c.1 = c.1.max(e.t_end());
    }
    for s in inner.sessions.values_mut() {
        if let Some((n, end)) = counts.get(&s.session_id) {
            s.epoch_count = *n;
            if s.open {
                s.t_end = s.t_end.max(*end);
            }
        }
        inner.counters.next_session_id = inner.counters.next_session_id.max(s.session_id + 1);
    }
    // Only the newest unclosed session stays active; older ones were interrupted.
    let open: Vec<u64> = inner.sessions.values().filter(|s| s.open).map(|s| s.session_id).collect();
    inner.active = open.last().copied();
    for id in &open[..open.len().saturating_sub(1)] {
        inner.sessions.get_mut(id).expect("listed").open = false;
    }
    Ok(inner)
}
