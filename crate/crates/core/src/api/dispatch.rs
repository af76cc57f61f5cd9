use std::collections::BTreeMap;
use std::sync::Arc;

use chrono_tz::Tz;
use parking_lot::RwLock;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{command, metric_glossary, metrics_markdown, ApiError, ApiEvent, ErrorCode, EventSink, API_FORMAT_VERSION};
use crate::acquisition::DeviceDescriptor;
use crate::analytics::{self, AnalyticsError, CompareOptions, TimeRange};
use crate::protocols::{now_unix, EngineOptions, ProtocolEngine, ProtocolError, ProtocolEvent, ProtocolSink, RunStatus};
use crate::search::{
    self, ExgAnchor, JobManager, LayoutParams, ProjectionMethod, ProjectionRequest, SearchError, DEFAULT_HOP_BUDGET,
    DEFAULT_PATH_K, DEFAULT_RESULTS,
};
use crate::store::{
    DeleteScope, EpochRecord, LabelRecord, SessionRecord, Store, StoreError, Surface, DEFAULT_HORIZON_S,
    DEFAULT_LABEL_WINDOW_S,
};

#[derive(Debug, Clone)]
pub struct ApiConfig {
    /// Zone for night detection in `sleep`.
    pub tz: Tz,
    pub compare_cap_s: f64,
    pub require_confirm_default: bool,
    pub labels_list_default: usize,
    pub protocol: EngineOptions,
}

impl Default for ApiConfig {
    fn default() -> Self {
        Self {
            tz: chrono_tz::UTC,
            compare_cap_s: analytics::DEFAULT_COMPARE_CAP_S,
            require_confirm_default: true,
            labels_list_default: 10,
            protocol: EngineOptions::default(),
        }
    }
}

/// Per-request facts supplied by the transport.
#[derive(Debug, Clone, Default)]
pub struct CallContext {
    pub owner_token: Option<String>,
    /// HTTP: mutating commands are refused.
    pub read_only_transport: bool,
}

/// What the acquisition side last reported.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LiveStatus {
    pub device: Option<DeviceDescriptor>,
    pub streaming: bool,
    pub last_epoch: Option<EpochRecord>,
}

struct EventProtocolSink {
    events: Arc<dyn EventSink>,
}

impl ProtocolSink for EventProtocolSink {
    fn notify(&self, title: &str, text: &str) -> Result<(), String> {
        log::info!(target: "protocol", "notify: {title}: {text}");
        Ok(())
    }

    fn say(&self, text: &str) -> Result<(), String> {
        log::info!(target: "protocol", "say: {text}");
        Ok(())
    }

    fn event(&self, event: &ProtocolEvent) {
        self.events.publish(event.clone().into());
    }
}

/// The command surface over one store.
pub struct Api {
    store: Arc<Store>,
    jobs: JobManager,
    protocols: ProtocolEngine,
    events: Arc<dyn EventSink>,
    live: RwLock<LiveStatus>,
    config: ApiConfig,
}

fn parse<T: DeserializeOwned>(cmd: &str, args: &Value) -> Result<T, ApiError> {
    let args = if args.is_null() { json!({}) } else { args.clone() };
    serde_path_to_error::deserialize(args).map_err(|e| {
        let path = e.path().to_string();
        let at = if path == "." { String::new() } else { format!(" at `{path}`") };
        ApiError::bad_args(format!("{cmd}{at}: {}", e.into_inner()))
    })
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, ApiError> {
    serde_json::to_value(v).map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))
}

fn store_code(e: &StoreError) -> ErrorCode {
    match e {
        StoreError::EmptyText | StoreError::Range(_) => ErrorCode::BadArgs,
        StoreError::OwnerOnly => ErrorCode::OwnerOnly,
        StoreError::BadToken => ErrorCode::BadToken,
        StoreError::Embedding(_) => ErrorCode::Embedding,
        StoreError::Io { .. } | StoreError::Corrupt { .. } | StoreError::Format { .. } => ErrorCode::Internal,
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::new(store_code(&e), e.to_string())
    }
}

impl From<SearchError> for ApiError {
    fn from(e: SearchError) -> Self {
        let code = match &e {
            SearchError::NotFound(_) | SearchError::UnknownJob(_) => ErrorCode::NotFound,
            SearchError::TooFew { .. } => ErrorCode::TooFew,
            SearchError::CapExceeded { .. } => ErrorCode::CapExceeded,
            SearchError::Range(_) => ErrorCode::BadArgs,
            SearchError::Embedding(_) => ErrorCode::Embedding,
            SearchError::Store(s) => store_code(s),
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> Self {
        let code = match &e {
            AnalyticsError::EmptyRange { .. } => ErrorCode::EmptyRange,
            AnalyticsError::CapExceeded { .. } => ErrorCode::CapExceeded,
            AnalyticsError::Range { .. } => ErrorCode::BadArgs,
            AnalyticsError::AutoSelect(_) => ErrorCode::AutoSelect,
            AnalyticsError::NoSleepData(_) => ErrorCode::NoSleepData,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<ProtocolError> for ApiError {
    fn from(e: ProtocolError) -> Self {
        let code = match &e {
            ProtocolError::UnknownRecipe(_) | ProtocolError::UnknownRun(_) => ErrorCode::NotFound,
            ProtocolError::Busy(_) => ErrorCode::Busy,
            ProtocolError::State { .. } => ErrorCode::InvalidState,
            ProtocolError::Parse { .. } => ErrorCode::BadArgs,
            ProtocolError::Io { .. } | ProtocolError::Store(_) => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoArgs {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GetStateArgs {
    horizon_s: Option<f64>,
    at: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LimitArgs {
    limit: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CompareArgs {
    a_start: Option<f64>,
    a_end: Option<f64>,
    b_start: Option<f64>,
    b_end: Option<f64>,
    #[serde(default)]
    allow_large_range: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SearchLabelsArgs {
    query: String,
    n: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SearchExgArgs {
    label_id: Option<u64>,
    session_id: Option<u64>,
    t_start: Option<f64>,
    n: Option<usize>,
    #[serde(default)]
    include_self: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PathArgs {
    from: u64,
    to: u64,
    k: Option<usize>,
    budget: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProjectArgs {
    t_start: f64,
    t_end: f64,
    method: Option<ProjectionMethod>,
    params: Option<LayoutParams>,
    #[serde(default)]
    allow_large_range: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JobArgs {
    job_id: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelAddArgs {
    text: String,
    window_s: Option<f64>,
    t: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProtocolStartArgs {
    recipe: String,
    require_confirm: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RunArgs {
    run_id: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RangeArgs {
    t_start: Option<f64>,
    t_end: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DeleteArgs {
    #[serde(default)]
    all: bool,
    t_start: Option<f64>,
    t_end: Option<f64>,
}

/// Label as returned over the wire: everything but the vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelView {
    pub label_id: u64,
    pub text: String,
    pub t: f64,
    pub window_s: f64,
    pub session_day: u32,
    pub metric_snapshot: BTreeMap<String, f64>,
    pub model_id: String,
}

impl From<&LabelRecord> for LabelView {
    fn from(l: &LabelRecord) -> Self {
        Self {
            label_id: l.label_id,
            text: l.text.clone(),
            t: l.t,
            window_s: l.window_s,
            session_day: l.session_day,
            metric_snapshot: l.metric_snapshot.clone(),
            model_id: l.embedding.model_id.clone(),
        }
    }
}

fn both(cmd: &str, a: Option<f64>, b: Option<f64>, what: &str) -> Result<Option<TimeRange>, ApiError> {
    match (a, b) {
        (Some(s), Some(e)) => Ok(Some(TimeRange::new(s, e))),
        (None, None) => Ok(None),
        _ => Err(ApiError::bad_args(format!("{cmd}: {what} needs both start and end"))),
    }
}

impl Api {
    pub fn new(store: Arc<Store>, events: Arc<dyn EventSink>, config: ApiConfig) -> Self {
        let job_events = events.clone();
        let jobs = JobManager::new(store.clone())
            .with_listener(move |p| job_events.publish(ApiEvent::JobProgress(p)));
        let sink = Arc::new(EventProtocolSink { events: events.clone() });
        let protocols = ProtocolEngine::new(sink, Some(store.clone()), config.protocol);
        Self { store, jobs, protocols, events, live: RwLock::new(LiveStatus::default()), config }
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn protocols(&self) -> &ProtocolEngine {
        &self.protocols
    }

    pub fn jobs(&self) -> &JobManager {
        &self.jobs
    }

    pub fn config(&self) -> &ApiConfig {
        &self.config
    }

    pub fn events(&self) -> &Arc<dyn EventSink> {
        &self.events
    }

    pub fn live(&self) -> LiveStatus {
        self.live.read().clone()
    }

    pub fn set_device(&self, device: Option<DeviceDescriptor>, streaming: bool) {
        let mut live = self.live.write();
        live.device = device;
        live.streaming = streaming;
    }

    /// Records a stored epoch as the latest and publishes a metrics event.
    pub fn epoch_stored(&self, epoch: &EpochRecord) {
        self.live.write().last_epoch = Some(epoch.clone());
        self.events.publish(ApiEvent::Metrics {
            t: epoch.t_start,
            session_id: epoch.session_id,
            quality: epoch.quality,
            metrics: epoch.metrics,
        });
    }

    /// Runs one command. Connection-level commands are refused here.
    pub fn dispatch(&self, cmd: &str, args: &Value, ctx: &CallContext) -> Result<Value, ApiError> {
        let spec = command(cmd).ok_or_else(|| ApiError::new(ErrorCode::UnknownCommand, format!("unknown command `{cmd}`")))?;
        if spec.connection {
            return Err(ApiError::new(
                ErrorCode::ReadOnlyTransport,
                format!("{cmd} needs a WebSocket connection"),
            ));
        }
        if ctx.read_only_transport && !spec.read_only {
            return Err(ApiError::new(ErrorCode::ReadOnlyTransport, format!("{cmd} changes state; send it over WebSocket")));
        }
        if !args.is_null() && !args.is_object() {
            return Err(ApiError::bad_args(format!("{cmd}: args must be an object")));
        }
        match cmd {
            "status" => {
                parse::<NoArgs>(cmd, args)?;
                let live = self.live();
                let session = self.store.active_session();
                let last = live.last_epoch.or_else(|| self.store.with_epochs(f64::MIN, f64::MAX, |e| e.last().cloned()));
                Ok(json!({
                    "format_version": API_FORMAT_VERSION,
                    "device": live.device,
                    "streaming": live.streaming,
                    "session": session,
                    "last_metrics": last.as_ref().map(|e| e.metrics),
                    "last_epoch_t": last.as_ref().map(|e| e.t_start),
                    "epoch_count": self.store.epoch_count(),
                    "label_count": self.store.labels().len(),
                }))
            }
            "get-state" => {
                let a: GetStateArgs = parse(cmd, args)?;
                let horizon = a.horizon_s.unwrap_or(DEFAULT_HORIZON_S);
                if !(horizon > 0.0) {
                    return Err(ApiError::bad_args("get-state: horizon_s must be positive"));
                }
                to_value(&self.store.get_state(horizon, a.at.unwrap_or_else(now_unix)))
            }
            "sessions" => {
                let a: LimitArgs = parse(cmd, args)?;
                let mut sessions: Vec<SessionRecord> = self.store.sessions();
                if let Some(n) = a.limit {
                    sessions.truncate(n);
                }
                Ok(json!({ "sessions": sessions }))
            }
            "compare" => {
                let a: CompareArgs = parse(cmd, args)?;
                let opts = CompareOptions {
                    cap_s: (!a.allow_large_range).then_some(self.config.compare_cap_s),
                    ..CompareOptions::default()
                };
                let ra = both(cmd, a.a_start, a.a_end, "range A")?;
                let rb = both(cmd, a.b_start, a.b_end, "range B")?;
                let report = match (ra, rb) {
                    (Some(ra), Some(rb)) => analytics::compare(&self.store, ra, rb, &opts)?,
                    (None, None) => analytics::compare_auto(&self.store, &opts)?,
                    _ => return Err(ApiError::bad_args("compare: give both ranges or neither")),
                };
                to_value(&report)
            }
            "search-labels" => {
                let a: SearchLabelsArgs = parse(cmd, args)?;
                to_value(&search::search_labels(&self.store, &a.query, a.n.unwrap_or(DEFAULT_RESULTS))?)
            }
            "search-exg" => {
                let a: SearchExgArgs = parse(cmd, args)?;
                let anchor = match (a.label_id, a.session_id, a.t_start) {
                    (Some(label_id), None, None) => ExgAnchor::Label { label_id },
                    (None, Some(session_id), Some(t_start)) => ExgAnchor::Window { session_id, t_start },
                    _ => return Err(ApiError::bad_args("search-exg: give label_id, or session_id with t_start")),
                };
                to_value(&search::search_exg(&self.store, anchor, a.n.unwrap_or(DEFAULT_RESULTS), a.include_self)?)
            }
            "search-path" => {
                let a: PathArgs = parse(cmd, args)?;
                let k = a.k.unwrap_or(DEFAULT_PATH_K);
                to_value(&search::path_between(&self.store, a.from, a.to, k, a.budget.unwrap_or(DEFAULT_HOP_BUDGET))?)
            }
            "project-start" => {
                let a: ProjectArgs = parse(cmd, args)?;
                let job_id = self.jobs.start(ProjectionRequest {
                    t_start: a.t_start,
                    t_end: a.t_end,
                    method: a.method.unwrap_or(ProjectionMethod::Pca),
                    params: a.params.unwrap_or_default(),
                    allow_large_range: a.allow_large_range,
                })?;
                Ok(json!({ "job_id": job_id }))
            }
            "project-status" => {
                let a: JobArgs = parse(cmd, args)?;
                to_value(&self.jobs.status(a.job_id)?)
            }
            "project-cancel" => {
                let a: JobArgs = parse(cmd, args)?;
                to_value(&self.jobs.cancel(a.job_id)?)
            }
            "label-add" => {
                let a: LabelAddArgs = parse(cmd, args)?;
                let label = self.store.add_label(
                    &a.text,
                    a.window_s.unwrap_or(DEFAULT_LABEL_WINDOW_S),
                    a.t.unwrap_or_else(now_unix),
                )?;
                self.events.publish(ApiEvent::LabelAdded { label_id: label.label_id, text: label.text.clone(), t: label.t });
                to_value(&LabelView::from(&label))
            }
            "labels-list" => {
                let a: LimitArgs = parse(cmd, args)?;
                let labels: Vec<LabelView> = self
                    .store
                    .recent_labels(a.limit.unwrap_or(self.config.labels_list_default))
                    .iter()
                    .map(LabelView::from)
                    .collect();
                Ok(json!({ "labels": labels }))
            }
            "recipes-list" => {
                parse::<NoArgs>(cmd, args)?;
                let recipes: Vec<Value> = self
                    .protocols
                    .recipes()
                    .into_iter()
                    .map(|r| {
                        json!({
                            "recipe_id": r.recipe_id,
                            "name": r.name,
                            "rounds": r.rounds,
                            "tags": r.tags,
                            "description": r.description,
                            "steps": r.step_count(),
                            "timed_seconds": r.timed_seconds(),
                            "phases": r.phases,
                        })
                    })
                    .collect();
                Ok(json!({ "recipes": recipes }))
            }
            "protocols-list" => {
                parse::<NoArgs>(cmd, args)?;
                Ok(json!({ "runs": self.protocols.runs() }))
            }
            "protocol-start" => {
                let a: ProtocolStartArgs = parse(cmd, args)?;
                let confirm = a.require_confirm.unwrap_or(self.config.require_confirm_default);
                to_value(&self.protocols.start(&a.recipe, confirm)?)
            }
            "protocol-status" => {
                let a: RunArgs = parse(cmd, args)?;
                let run = match a.run_id {
                    Some(id) => self.protocols.run(id).ok_or(ProtocolError::UnknownRun(id))?,
                    None => self.protocols.current().ok_or_else(|| ApiError::new(ErrorCode::NotFound, "no protocol runs yet"))?,
                };
                to_value(&run)
            }
            "protocol-confirm" | "protocol-abort" => {
                let a: RunArgs = parse(cmd, args)?;
                let id = match a.run_id {
                    Some(id) => id,
                    None => self
                        .protocols
                        .current()
                        .filter(|r| !r.status.is_terminal())
                        .map(|r| r.run_id)
                        .ok_or_else(|| ApiError::new(ErrorCode::NotFound, "no active protocol run"))?,
                };
                let run = if cmd == "protocol-confirm" { self.protocols.confirm(id)? } else { self.protocols.abort(id)? };
                debug_assert!(cmd != "protocol-confirm" || run.status == RunStatus::Running);
                to_value(&run)
            }
            "sleep" => {
                let a: RangeArgs = parse(cmd, args)?;
                let range = both(cmd, a.t_start, a.t_end, "the range")?;
                to_value(&analytics::sleep_summary(&self.store, range, self.config.tz)?)
            }
            "data-reference" => {
                parse::<NoArgs>(cmd, args)?;
                Ok(json!({ "metrics": metric_glossary(), "markdown": metrics_markdown() }))
            }
            "delete" => {
                let a: DeleteArgs = parse(cmd, args)?;
                let scope = match (a.all, a.t_start, a.t_end) {
                    (true, None, None) => DeleteScope::All,
                    (false, Some(t_start), Some(t_end)) => DeleteScope::Range { t_start, t_end },
                    _ => return Err(ApiError::bad_args("delete: give --all, or t_start with t_end")),
                };
                let surface = if ctx.owner_token.is_some() { Surface::Owner } else { Surface::Agent };
                to_value(&self.store.delete(scope, ctx.owner_token.as_deref(), surface)?)
            }
            _ => Err(ApiError::new(ErrorCode::Internal, format!("{cmd} has no handler"))),
        }
    }
}
