//! Exact nearest-neighbour retrieval over label and EXG embeddings, 2-D
//! projections and greedy paths through EXG space.

mod jobs;
mod layout;
mod pca;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use jobs::{JobManager, JobProgress, JobStatus, ProjectedPoint, ProjectionJob, ProjectionMethod, ProjectionRequest};
pub use layout::{force_layout, knn_graph, LayoutParams};
pub use pca::{pca_2d, symmetric_eigen, Pca};

use crate::embeddings::{raw_distance, similarity_percent, EmbeddingError, EmbeddingVector, TextEmbedder};
use crate::scalar::Real;
use crate::store::{snapshot_means, EmbeddingRef, LabelRecord, Store, StoreError, StoredEmbedding};

pub const DEFAULT_RESULTS: usize = 18;
pub const DEFAULT_PATH_K: usize = 5;
pub const DEFAULT_HOP_BUDGET: usize = 50;
/// Longest projection range accepted without the override flag.
pub const DEFAULT_RANGE_CAP_S: f64 = 24.0 * 3600.0;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("need at least {need} embeddings in range, found {found}")]
    TooFew { need: usize, found: usize },
    #[error("range spans {span_s:.0} s, above the {cap_s:.0} s cap (pass the override flag to allow)")]
    CapExceeded { span_s: f64, cap_s: f64 },
    #[error("invalid range: {0}")]
    Range(String),
    #[error("job {0} not found")]
    UnknownJob(u64),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub type Result<T, E = SearchError> = std::result::Result<T, E>;

/// One corpus entry for [`knn`].
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a, T> {
    pub values: &'a [T],
    /// Recording time, newer wins ties.
    pub time: f64,
    /// Final tie-break, lower wins.
    pub id: u64,
}

/// Ranking order: ascending distance, then newer, then lower id.
pub fn rank_order<T: Real>(a: (T, f64, u64), b: (T, f64, u64)) -> Ordering {
    a.0.partial_cmp(&b.0)
        .unwrap_or(Ordering::Equal)
        .then(b.1.total_cmp(&a.1))
        .then(a.2.cmp(&b.2))
}

/// Exact brute-force kNN. Returns `(corpus index, distance)` for the best `n`.
pub fn knn<T: Real>(query: &[T], corpus: &[Candidate<'_, T>], n: usize) -> Vec<(usize, T)> {
    let mut scored: Vec<(usize, T)> =
        corpus.iter().enumerate().map(|(i, c)| (i, raw_distance(query, c.values))).collect();
    scored.sort_by(|a, b| {
        rank_order((a.1, corpus[a.0].time, corpus[a.0].id), (b.1, corpus[b.0].time, corpus[b.0].id))
    });
    scored.truncate(n);
    scored
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    #[serde(rename = "ref")]
    pub reference: EmbeddingRef,
    /// Label text for label results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub distance: f64,
    pub similarity_pct: u8,
    pub model_id: String,
    pub metric_snapshot: BTreeMap<String, f64>,
    pub session_day: u32,
    pub recorded_at: f64,
    pub window_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    /// `text` for label search, `exg` for signal search.
    pub mode: String,
    pub query: String,
    pub model_id: String,
    pub n: usize,
    pub results: Vec<SearchResult>,
}

fn label_result(l: &LabelRecord, distance: f64) -> SearchResult {
    SearchResult {
        reference: EmbeddingRef::Label { label_id: l.label_id },
        text: Some(l.text.clone()),
        distance,
        similarity_pct: similarity_percent(distance),
        model_id: l.embedding.model_id.clone(),
        metric_snapshot: l.metric_snapshot.clone(),
        session_day: l.session_day,
        recorded_at: l.t,
        window_s: l.window_s,
    }
}

/// Ranks stored labels against `query` under the store's text model.
pub fn search_labels(store: &Store, query: &str, n: usize) -> Result<SearchReport> {
    let embedder: &dyn TextEmbedder<f64> = store.text_embedder();
    let model_id = embedder.spec().model_id.clone();
    let q = embedder.embed_text(query, 0.0)?;
    let labels: Vec<LabelRecord> =
        store.labels().into_iter().filter(|l| l.embedding.comparable_with(&q)).collect();
    let corpus: Vec<Candidate<'_, f64>> = labels
        .iter()
        .map(|l| Candidate { values: &l.embedding.values, time: l.t, id: l.label_id })
        .collect();
    let results = knn(&q.values, &corpus, n).into_iter().map(|(i, d)| label_result(&labels[i], d)).collect();
    Ok(SearchReport { mode: "text".into(), query: query.into(), model_id, n, results })
}

/// Anchor of an EXG query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExgAnchor {
    Window { session_id: u64, t_start: f64 },
    Label { label_id: u64 },
}

fn same_window(r: &EmbeddingRef, session: u64, t: f64) -> bool {
    matches!(r, EmbeddingRef::Window { session_id, t_start, .. } if *session_id == session && *t_start == t)
}

/// Index into `windows` of the embedding an anchor resolves to.
///
/// A label resolves to the latest window overlapping `[t - window_s, t]`.
pub fn resolve_anchor(store: &Store, windows: &[StoredEmbedding], anchor: ExgAnchor) -> Result<usize> {
    match anchor {
        ExgAnchor::Window { session_id, t_start } => windows
            .iter()
            .position(|w| same_window(&w.reference, session_id, t_start))
            .ok_or_else(|| SearchError::NotFound(format!("no EXG embedding for window {session_id}@{t_start}"))),
        ExgAnchor::Label { label_id } => {
            let l = store.label(label_id).ok_or_else(|| SearchError::NotFound(format!("label #{label_id}")))?;
            let (lo, hi) = (l.t - l.window_s, l.t);
            windows
                .iter()
                .enumerate()
                .filter_map(|(i, w)| match w.reference {
                    EmbeddingRef::Window { t_start, window_s, .. }
                        if t_start <= hi && t_start + window_s >= lo =>
                    {
                        Some((i, t_start))
                    }
                    _ => None,
                })
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .ok_or_else(|| SearchError::NotFound(format!("label #{label_id} has no EXG embedding in its window")))
        }
    }
}

fn window_result(store: &Store, w: &StoredEmbedding, distance: f64) -> SearchResult {
    let EmbeddingRef::Window { session_id, t_start, window_s } = w.reference else {
        unreachable!("window embeddings carry window refs")
    };
    let snapshot = store.with_epochs(t_start, t_start + window_s.max(1e-9), |e| {
        let own: Vec<_> = e.iter().filter(|r| r.session_id == session_id).cloned().collect();
        snapshot_means(&own)
    });
    SearchResult {
        reference: w.reference,
        text: None,
        distance,
        similarity_pct: similarity_percent(distance),
        model_id: w.vector.model_id.clone(),
        metric_snapshot: snapshot,
        session_day: store.session(session_id).map_or_else(|| store.day_key(t_start), |s| s.session_day),
        recorded_at: t_start,
        window_s,
    }
}

fn comparable(windows: &[StoredEmbedding], like: &EmbeddingVector<f64>) -> Vec<usize> {
    (0..windows.len()).filter(|&i| windows[i].vector.comparable_with(like)).collect()
}

/// kNN over EXG window embeddings of the anchor's model.
pub fn search_exg(store: &Store, anchor: ExgAnchor, n: usize, include_self: bool) -> Result<SearchReport> {
    let windows = store.window_embeddings();
    let a = resolve_anchor(store, &windows, anchor)?;
    let q = &windows[a].vector;
    let pool: Vec<usize> = comparable(&windows, q).into_iter().filter(|&i| include_self || i != a).collect();
    let corpus: Vec<Candidate<'_, f64>> = pool
        .iter()
        .map(|&i| Candidate {
            values: &windows[i].vector.values,
            time: windows[i].reference.time().unwrap_or(0.0),
            id: i as u64,
        })
        .collect();
    let results = knn(&q.values, &corpus, n)
        .into_iter()
        .map(|(k, d)| window_result(store, &windows[pool[k]], d))
        .collect();
    let query = match anchor {
        ExgAnchor::Label { label_id } => format!("#{label_id}"),
        ExgAnchor::Window { session_id, t_start } => format!("{session_id}@{t_start}"),
    };
    Ok(SearchReport { mode: "exg".into(), query, model_id: q.model_id.clone(), n, results })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub path: Vec<EmbeddingRef>,
    /// False when the hop budget ran out or the walk got stuck before `b`.
    pub complete: bool,
}

/// Greedy walk over the EXG kNN graph between two labels.
///
/// Each hop looks at the `k` nearest neighbours of the current window; it
/// steps onto `b` if present, otherwise onto the unvisited neighbour closest
/// to `b`.
pub fn path_between(store: &Store, label_a: u64, label_b: u64, k: usize, hop_budget: usize) -> Result<PathResult> {
    let windows = store.window_embeddings();
    let a = resolve_anchor(store, &windows, ExgAnchor::Label { label_id: label_a })?;
    let b = resolve_anchor(store, &windows, ExgAnchor::Label { label_id: label_b })?;
    let pool = comparable(&windows, &windows[a].vector);
    if !pool.contains(&b) {
        return Err(SearchError::Embedding(EmbeddingError::Incomparable {
            a: windows[a].vector.model_id.clone(),
            b: windows[b].vector.model_id.clone(),
        }));
    }
    Ok(greedy_path(&windows.iter().map(|w| w.vector.values.as_slice()).collect::<Vec<_>>(), &pool, a, b, k, hop_budget)
        .map_refs(|i| windows[i].reference))
}

struct IndexPath {
    nodes: Vec<usize>,
    complete: bool,
}

impl IndexPath {
    fn map_refs(self, f: impl Fn(usize) -> EmbeddingRef) -> PathResult {
        PathResult { path: self.nodes.into_iter().map(f).collect(), complete: self.complete }
    }
}

fn greedy_path<T: Real>(vecs: &[&[T]], pool: &[usize], a: usize, b: usize, k: usize, budget: usize) -> IndexPath {
    let mut nodes = vec![a];
    if a == b {
        return IndexPath { nodes, complete: true };
    }
    let mut visited: HashSet<usize> = HashSet::from([a]);
    let mut cur = a;
    for _ in 0..budget {
        let others: Vec<usize> = pool.iter().copied().filter(|&i| i != cur).collect();
        let corpus: Vec<Candidate<'_, T>> =
            others.iter().map(|&i| Candidate { values: vecs[i], time: 0.0, id: i as u64 }).collect();
        let nbrs: Vec<usize> = knn(vecs[cur], &corpus, k).into_iter().map(|(j, _)| others[j]).collect();
        if nbrs.contains(&b) {
            nodes.push(b);
            return IndexPath { nodes, complete: true };
        }
        let next = nbrs
            .into_iter()
            .filter(|i| !visited.contains(i))
            .map(|i| (raw_distance(vecs[i], vecs[b]), i))
            .min_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(Ordering::Equal).then(x.1.cmp(&y.1)));
        match next {
            Some((_, i)) => {
                visited.insert(i);
                nodes.push(i);
                cur = i;
            }
            None => break,
        }
    }
    IndexPath { nodes, complete: false }
}
