use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::layout::{force_layout, LayoutParams};
use super::pca::pca_2d;
use super::{Result, SearchError, DEFAULT_RANGE_CAP_S};
use crate::store::{EmbeddingRef, Store, StoredEmbedding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionMethod {
    Pca,
    ForceLayout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Cancelled,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Done | JobStatus::Cancelled | JobStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRequest {
    pub t_start: f64,
    pub t_end: f64,
    pub method: ProjectionMethod,
    #[serde(default)]
    pub params: LayoutParams,
    /// Lifts the range cap.
    #[serde(default)]
    pub allow_large_range: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    #[serde(rename = "ref")]
    pub reference: EmbeddingRef,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionJob {
    pub job_id: u64,
    pub request: ProjectionRequest,
    pub status: JobStatus,
    /// Fraction complete in `[0, 1]`.
    pub progress: f64,
    /// Present iff `status` is done.
    pub result: Option<Vec<ProjectedPoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JobProgress {
    pub job_id: u64,
    pub status: JobStatus,
    pub progress: f64,
}

type Listener = Arc<dyn Fn(JobProgress) + Send + Sync>;

struct Entry {
    job: ProjectionJob,
    cancel: Arc<AtomicBool>,
}

/// Runs projection jobs on background threads.
///
/// Status and cancel calls only touch the job table, so they never wait on a
/// running computation. At most one force-layout job computes at a time;
/// later ones stay queued.
pub struct JobManager {
    store: Arc<Store>,
    range_cap_s: f64,
    jobs: Arc<Mutex<BTreeMap<u64, Entry>>>,
    next: AtomicU64,
    force_slot: Arc<Mutex<()>>,
    listener: Option<Listener>,
}

impl JobManager {
    pub fn new(store: Arc<Store>) -> Self {
        Self {
            store,
            range_cap_s: DEFAULT_RANGE_CAP_S,
            jobs: Arc::default(),
            next: AtomicU64::new(1),
            force_slot: Arc::default(),
            listener: None,
        }
    }

    pub fn with_range_cap(mut self, cap_s: f64) -> Self {
        self.range_cap_s = cap_s;
        self
    }

    /// Receives every status change and progress step.
    pub fn with_listener(mut self, f: impl Fn(JobProgress) + Send + Sync + 'static) -> Self {
        self.listener = Some(Arc::new(f));
        self
    }

    pub fn range_cap_s(&self) -> f64 {
        self.range_cap_s
    }

    /// Validates the request and starts the job, returning its id at once.
    pub fn start(&self, request: ProjectionRequest) -> Result<u64> {
        let span = request.t_end - request.t_start;
        if !(span > 0.0) || !span.is_finite() {
            return Err(SearchError::Range(format!("{} .. {}", request.t_start, request.t_end)));
        }
        if span > self.range_cap_s && !request.allow_large_range {
            return Err(SearchError::CapExceeded { span_s: span, cap_s: self.range_cap_s });
        }
        let points = select(&self.store, request.t_start, request.t_end);
        if points.len() < 3 {
            return Err(SearchError::TooFew { need: 3, found: points.len() });
        }
        let job_id = self.next.fetch_add(1, Ordering::Relaxed);
        let cancel = Arc::new(AtomicBool::new(false));
        let job = ProjectionJob {
            job_id,
            request: request.clone(),
            status: JobStatus::Queued,
            progress: 0.0,
            result: None,
            error: None,
        };
        self.jobs.lock().insert(job_id, Entry { job, cancel: cancel.clone() });
        self.notify(job_id);

        let (jobs, slot, listener) = (self.jobs.clone(), self.force_slot.clone(), self.listener.clone());
        std::thread::Builder::new()
            .name(format!("projection-{job_id}"))
            .spawn(move || run(job_id, request, points, cancel, jobs, slot, listener))
            .expect("spawn projection thread");
        Ok(job_id)
    }

    pub fn status(&self, job_id: u64) -> Result<ProjectionJob> {
        self.jobs.lock().get(&job_id).map(|e| e.job.clone()).ok_or(SearchError::UnknownJob(job_id))
    }

    pub fn list(&self) -> Vec<ProjectionJob> {
        self.jobs.lock().values().map(|e| e.job.clone()).collect()
    }

    /// Marks the job cancelled; the worker stops at its next iteration.
    pub fn cancel(&self, job_id: u64) -> Result<ProjectionJob> {
        let job = {
            let mut jobs = self.jobs.lock();
            let e = jobs.get_mut(&job_id).ok_or(SearchError::UnknownJob(job_id))?;
            e.cancel.store(true, Ordering::SeqCst);
            if !e.job.status.is_terminal() {
                e.job.status = JobStatus::Cancelled;
                e.job.result = None;
            }
            e.job.clone()
        };
        self.notify(job_id);
        Ok(job)
    }

    /// Polls until the job is terminal or `timeout` passes.
    pub fn wait(&self, job_id: u64, timeout: Duration) -> Result<ProjectionJob> {
        let deadline = Instant::now() + timeout;
        loop {
            let job = self.status(job_id)?;
            if job.status.is_terminal() || Instant::now() >= deadline {
                return Ok(job);
            }
            std::thread::sleep(Duration::from_millis(2));
        }
    }

    fn notify(&self, job_id: u64) {
        notify(&self.jobs, &self.listener, job_id);
    }
}

fn notify(jobs: &Mutex<BTreeMap<u64, Entry>>, listener: &Option<Listener>, job_id: u64) {
    if let Some(f) = listener {
        let p = jobs.lock().get(&job_id).map(|e| JobProgress {
            job_id,
            status: e.job.status,
            progress: e.job.progress,
        });
        if let Some(p) = p {
            f(p);
        }
    }
}

/// Window embeddings with `t_start` in `[t0, t1)` sharing the first one's model.
fn select(store: &Store, t0: f64, t1: f64) -> Vec<StoredEmbedding> {
    let mut v: Vec<StoredEmbedding> = store
        .window_embeddings()
        .into_iter()
        .filter(|w| w.reference.time().is_some_and(|t| t >= t0 && t < t1))
        .collect();
    v.sort_by(|a, b| a.reference.time().unwrap_or(0.0).total_cmp(&b.reference.time().unwrap_or(0.0)));
    if let Some(first) = v.first().cloned() {
        v.retain(|w| w.vector.comparable_with(&first.vector));
    }
    v
}

fn update(jobs: &Mutex<BTreeMap<u64, Entry>>, job_id: u64, f: impl FnOnce(&mut ProjectionJob)) -> bool {
    let mut jobs = jobs.lock();
    match jobs.get_mut(&job_id) {
        Some(e) if !e.job.status.is_terminal() => {
            f(&mut e.job);
            true
        }
        _ => false,
    }
}

fn run(
    job_id: u64,
    request: ProjectionRequest,
    points: Vec<StoredEmbedding>,
    cancel: Arc<AtomicBool>,
    jobs: Arc<Mutex<BTreeMap<u64, Entry>>>,
    slot: Arc<Mutex<()>>,
    listener: Option<Listener>,
) {
    let _guard = (request.method == ProjectionMethod::ForceLayout).then(|| slot.lock());
    if cancel.load(Ordering::SeqCst) {
        return;
    }
    if update(&jobs, job_id, |j| j.status = JobStatus::Running) {
        notify(&jobs, &listener, job_id);
    }
    let rows: Vec<Vec<f64>> = points.iter().map(|p| p.vector.values.clone()).collect();
    let coords = match request.method {
        ProjectionMethod::Pca => Some(pca_2d(&rows).coords),
        ProjectionMethod::ForceLayout => {
            let step = (request.params.iterations / 20).max(1);
            force_layout(&rows, &request.params, |it, total| {
                if cancel.load(Ordering::SeqCst) {
                    return false;
                }
                if it % step == 0 && it > 0 {
                    let p = it as f64 / total.max(1) as f64;
                    if update(&jobs, job_id, |j| j.progress = p) {
                        notify(&jobs, &listener, job_id);
                    }
                }
                true
            })
        }
    };
    let finished = match coords {
        Some(c) => update(&jobs, job_id, |j| {
            j.status = JobStatus::Done;
            j.progress = 1.0;
            j.result = Some(
                points
                    .iter()
                    .zip(c)
                    .map(|(p, [x, y])| ProjectedPoint { reference: p.reference, x, y })
                    .collect(),
            );
        }),
        None => update(&jobs, job_id, |j| {
            j.status = JobStatus::Cancelled;
            j.result = None;
        }),
    };
    if finished {
        notify(&jobs, &listener, job_id);
    }
}
