//! Guided exercise recipes and the timed engine that runs them.
//!
//! Announce steps go to the notification sink and timed steps to the speech
//! sink. A run starts, ends or aborts with a label in the store.

mod recipe;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use parking_lot::{Condvar, Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::store::{Store, StoreError, DEFAULT_LABEL_WINDOW_S};

pub use recipe::{bundled_recipes, count_markers, slug, Phase, ProtocolRecipe, Step, StepKind, RECIPE_FORMAT_VERSION};

/// Finished runs kept for status queries.
const RUN_HISTORY: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("recipe line {line}, field `{field}`: {message}")]
    Parse { line: usize, field: String, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("unknown recipe `{0}`")]
    UnknownRecipe(String),
    #[error("run {0} is already active")]
    Busy(u64),
    #[error("unknown run {0}")]
    UnknownRun(u64),
    #[error("run {run_id} is {status}; cannot {action}")]
    State { run_id: u64, status: RunStatus, action: &'static str },
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    AwaitingConfirm,
    Running,
    Done,
    Aborted,
}

impl RunStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, RunStatus::Done | RunStatus::Aborted)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::AwaitingConfirm => "awaiting-confirm",
            RunStatus::Running => "running",
            RunStatus::Done => "done",
            RunStatus::Aborted => "aborted",
        }
    }
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLogEntry {
    pub index: usize,
    pub title: String,
    /// Unix seconds.
    pub t_emitted: f64,
    /// Monotonic seconds since the run started.
    pub offset_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRun {
    pub run_id: u64,
    pub recipe_id: String,
    pub name: String,
    pub total_steps: usize,
    pub status: RunStatus,
    pub created_at: f64,
    pub t_start: Option<f64>,
    pub t_end: Option<f64>,
    pub step_log: Vec<StepLogEntry>,
    pub labels: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ProtocolEvent {
    ProtocolStep { run_id: u64, total: usize, step: Step },
    ProtocolStatus { run_id: u64, recipe_id: String, status: RunStatus },
}

/// Output channels for a run. Failures are logged and the run carries on.
pub trait ProtocolSink: Send + Sync {
    fn notify(&self, title: &str, text: &str) -> std::result::Result<(), String>;
    fn say(&self, text: &str) -> std::result::Result<(), String>;
    fn event(&self, _event: &ProtocolEvent) {}
}

/// Discards everything.
pub struct NullSink;

impl ProtocolSink for NullSink {
    fn notify(&self, _: &str, _: &str) -> std::result::Result<(), String> {
        Ok(())
    }

    fn say(&self, _: &str) -> std::result::Result<(), String> {
        Ok(())
    }
}

/// What a [`MemorySink`] saw, in order.
#[derive(Debug, Clone, PartialEq)]
pub enum SinkCall {
    Notify { title: String, text: String },
    Say(String),
    Event(ProtocolEvent),
}

/// Keeps every call; doubles as an execution log.
#[derive(Default)]
pub struct MemorySink {
    calls: Mutex<Vec<SinkCall>>,
}

impl MemorySink {
    pub fn calls(&self) -> Vec<SinkCall> {
        self.calls.lock().clone()
    }
}

impl ProtocolSink for MemorySink {
    fn notify(&self, title: &str, text: &str) -> std::result::Result<(), String> {
        self.calls.lock().push(SinkCall::Notify { title: title.into(), text: text.into() });
        Ok(())
    }

    fn say(&self, text: &str) -> std::result::Result<(), String> {
        self.calls.lock().push(SinkCall::Say(text.into()));
        Ok(())
    }

    fn event(&self, event: &ProtocolEvent) {
        self.calls.lock().push(SinkCall::Event(event.clone()));
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EngineOptions {
    /// Multiplies every timed duration; 1.0 is wall-clock pacing.
    pub time_scale: f64,
    /// Source of the unix timestamps stamped on runs and step logs.
    pub clock: fn() -> f64,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions { time_scale: 1.0, clock: now_unix }
    }
}

#[derive(Default)]
struct State {
    next_run_id: u64,
    runs: BTreeMap<u64, ProtocolRun>,
    active: Option<u64>,
    abort_requested: bool,
}

#[derive(Default)]
struct Shared {
    state: Mutex<State>,
    cv: Condvar,
}

/// Requests an abort without waiting for the run to wind down.
#[derive(Clone)]
pub struct AbortHandle(Arc<Shared>);

impl AbortHandle {
    pub fn request(&self, run_id: u64) -> bool {
        let mut st = self.0.state.lock();
        let running = st.active == Some(run_id)
            && st.runs.get(&run_id).is_some_and(|r| r.status == RunStatus::Running);
        if running {
            st.abort_requested = true;
            self.0.cv.notify_all();
        }
        running
    }
}

pub fn now_unix() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// Holds the recipe registry and drives at most one run at a time.
pub struct ProtocolEngine {
    recipes: RwLock<BTreeMap<String, ProtocolRecipe>>,
    shared: Arc<Shared>,
    sink: Arc<dyn ProtocolSink>,
    store: Option<Arc<Store>>,
    options: EngineOptions,
}

impl ProtocolEngine {
    /// Engine preloaded with the bundled recipes.
    pub fn new(sink: Arc<dyn ProtocolSink>, store: Option<Arc<Store>>, options: EngineOptions) -> Self {
        let engine = ProtocolEngine {
            recipes: RwLock::new(BTreeMap::new()),
            shared: Arc::new(Shared { state: Mutex::new(State { next_run_id: 1, ..State::default() }), cv: Condvar::new() }),
            sink,
            store,
            options,
        };
        for r in bundled_recipes() {
            engine.register(r);
        }
        engine
    }

    pub fn register(&self, recipe: ProtocolRecipe) {
        self.recipes.write().insert(recipe.recipe_id.clone(), recipe);
    }

    pub fn load_recipe(&self, path: impl AsRef<Path>) -> Result<ProtocolRecipe> {
        let recipe = ProtocolRecipe::load(path)?;
        self.register(recipe.clone());
        Ok(recipe)
    }

    /// Registers every `*.json` file in `dir`, in name order.
    pub fn load_dir(&self, dir: impl AsRef<Path>) -> Result<Vec<ProtocolRecipe>> {
        let dir = dir.as_ref();
        let io = |source| ProtocolError::Io { path: dir.to_path_buf(), source };
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths.iter().map(|p| self.load_recipe(p)).collect()
    }

    pub fn recipes(&self) -> Vec<ProtocolRecipe> {
        self.recipes.read().values().cloned().collect()
    }

    pub fn recipe(&self, id: &str) -> Option<ProtocolRecipe> {
        self.recipes.read().get(id).cloned()
    }

    /// Looks a recipe up by id, then by case-insensitive name.
    pub fn find_recipe(&self, key: &str) -> Option<ProtocolRecipe> {
        let recipes = self.recipes.read();
        recipes
            .get(key)
            .or_else(|| recipes.get(&slug(key)))
            .or_else(|| recipes.values().find(|r| r.name.eq_ignore_ascii_case(key)))
            .cloned()
    }

    pub fn abort_handle(&self) -> AbortHandle {
        AbortHandle(self.shared.clone())
    }

    pub fn start(&self, recipe_id: &str, require_confirm: bool) -> Result<ProtocolRun> {
        let recipe = self.find_recipe(recipe_id).ok_or_else(|| ProtocolError::UnknownRecipe(recipe_id.into()))?;
        let mut st = self.shared.state.lock();
        if let Some(active) = st.active {
            return Err(ProtocolError::Busy(active));
        }
        let run_id = st.next_run_id;
        st.next_run_id += 1;
        let run = ProtocolRun {
            run_id,
            recipe_id: recipe.recipe_id.clone(),
            name: recipe.name.clone(),
            total_steps: recipe.step_count(),
            status: RunStatus::AwaitingConfirm,
            created_at: (self.options.clock)(),
            t_start: None,
            t_end: None,
            step_log: Vec::new(),
            labels: Vec::new(),
        };
        st.runs.insert(run_id, run);
        st.active = Some(run_id);
        while st.runs.len() > RUN_HISTORY {
            let oldest = *st.runs.keys().next().expect("non-empty");
            st.runs.remove(&oldest);
        }
        if require_confirm {
            drop(st);
            self.emit_status(run_id, &recipe.recipe_id, RunStatus::AwaitingConfirm);
            Ok(self.run(run_id).expect("just inserted"))
        } else {
            Ok(self.begin(st, recipe))
        }
    }

    pub fn confirm(&self, run_id: u64) -> Result<ProtocolRun> {
        let st = self.shared.state.lock();
        let run = st.runs.get(&run_id).ok_or(ProtocolError::UnknownRun(run_id))?;
        if run.status != RunStatus::AwaitingConfirm {
            return Err(ProtocolError::State { run_id, status: run.status, action: "confirm" });
        }
        let recipe = self.recipe(&run.recipe_id).ok_or_else(|| ProtocolError::UnknownRecipe(run.recipe_id.clone()))?;
        Ok(self.begin(st, recipe))
    }

    /// Declines a pending run, or stops a running one and waits for it to settle.
    pub fn abort(&self, run_id: u64) -> Result<ProtocolRun> {
        let mut st = self.shared.state.lock();
        let run = st.runs.get_mut(&run_id).ok_or(ProtocolError::UnknownRun(run_id))?;
        match run.status {
            RunStatus::AwaitingConfirm => {
                run.status = RunStatus::Aborted;
                run.t_end = Some((self.options.clock)());
                let out = run.clone();
                st.active = None;
                self.shared.cv.notify_all();
                drop(st);
                self.emit_status(run_id, &out.recipe_id, RunStatus::Aborted);
                Ok(out)
            }
            RunStatus::Running => {
                drop(st);
                self.abort_handle().request(run_id);
                self.wait(run_id, Duration::from_secs(5)).ok_or(ProtocolError::UnknownRun(run_id))
            }
            status => Err(ProtocolError::State { run_id, status, action: "abort" }),
        }
    }

    pub fn run(&self, run_id: u64) -> Option<ProtocolRun> {
        self.shared.state.lock().runs.get(&run_id).cloned()
    }

    /// The active run, else the most recent one.
    pub fn current(&self) -> Option<ProtocolRun> {
        let st = self.shared.state.lock();
        st.active.or_else(|| st.runs.keys().next_back().copied()).and_then(|id| st.runs.get(&id).cloned())
    }

    pub fn runs(&self) -> Vec<ProtocolRun> {
        self.shared.state.lock().runs.values().cloned().collect()
    }

    /// Blocks until the run is done or aborted, or `timeout` passes.
    pub fn wait(&self, run_id: u64, timeout: Duration) -> Option<ProtocolRun> {
        let deadline = Instant::now() + timeout;
        let mut st = self.shared.state.lock();
        loop {
            let run = st.runs.get(&run_id)?;
            if run.status.is_terminal() || Instant::now() >= deadline {
                return Some(run.clone());
            }
            self.shared.cv.wait_until(&mut st, deadline);
        }
    }

    fn emit_status(&self, run_id: u64, recipe_id: &str, status: RunStatus) {
        self.sink.event(&ProtocolEvent::ProtocolStatus { run_id, recipe_id: recipe_id.to_string(), status });
    }

    fn begin(&self, mut st: parking_lot::MutexGuard<'_, State>, recipe: ProtocolRecipe) -> ProtocolRun {
        let run_id = st.active.expect("run is active");
        st.abort_requested = false;
        let run = st.runs.get_mut(&run_id).expect("active run exists");
        run.status = RunStatus::Running;
        run.t_start = Some((self.options.clock)());
        let out = run.clone();
        drop(st);
        self.emit_status(run_id, &recipe.recipe_id, RunStatus::Running);
        let worker = Worker {
            shared: self.shared.clone(),
            sink: self.sink.clone(),
            store: self.store.clone(),
            scale: self.options.time_scale.max(0.0),
            clock: self.options.clock,
            run_id,
            t_start: out.t_start.expect("set above"),
        };
        std::thread::Builder::new()
            .name(format!("protocol-{run_id}"))
            .spawn(move || worker.execute(recipe))
            .expect("spawn protocol thread");
        out
    }
}

struct Worker {
    shared: Arc<Shared>,
    sink: Arc<dyn ProtocolSink>,
    store: Option<Arc<Store>>,
    scale: f64,
    clock: fn() -> f64,
    run_id: u64,
    t_start: f64,
}

impl Worker {
    fn label(&self, text: String, window_s: f64, t: f64) -> Option<u64> {
        let store = self.store.as_ref()?;
        match store.add_label(&text, window_s.max(0.0), t) {
            Ok(l) => Some(l.label_id),
            Err(e) => {
                log::warn!("protocol run {}: label `{text}` failed: {e}", self.run_id);
                None
            }
        }
    }

    fn execute(self, recipe: ProtocolRecipe) {
        let start = Instant::now();
        let steps = recipe.expand();
        let total = steps.len();
        let mut deadline = start;
        let mut aborted = false;
        for step in steps {
            {
                let mut st = self.shared.state.lock();
                if st.abort_requested {
                    aborted = true;
                    break;
                }
                let run = st.runs.get_mut(&self.run_id).expect("active run exists");
                run.step_log.push(StepLogEntry {
                    index: step.index,
                    title: step.title.clone(),
                    t_emitted: (self.clock)(),
                    offset_s: start.elapsed().as_secs_f64(),
                });
            }
            let sent = match step.kind {
                StepKind::Announce => self.sink.notify(&step.title, &step.text),
                StepKind::Timed => self.sink.say(&step.text),
            };
            if let Err(e) = sent {
                log::warn!("protocol run {} step {}: sink failed: {e}", self.run_id, step.index);
            }
            let timed = step.kind == StepKind::Timed;
            let seconds = step.seconds;
            self.sink.event(&ProtocolEvent::ProtocolStep { run_id: self.run_id, total, step });
            if timed {
                deadline += Duration::from_secs_f64(seconds * self.scale);
                let mut st = self.shared.state.lock();
                while !st.abort_requested && Instant::now() < deadline {
                    self.shared.cv.wait_until(&mut st, deadline);
                }
                if st.abort_requested {
                    aborted = true;
                    break;
                }
            }
        }
        if !aborted {
            aborted = self.shared.state.lock().abort_requested;
        }

        let t_end = self.t_start + start.elapsed().as_secs_f64();
        let mut labels = Vec::new();
        labels.extend(self.label(format!("{} start", recipe.name), DEFAULT_LABEL_WINDOW_S, self.t_start));
        let outcome = if aborted { "aborted" } else { "done" };
        labels.extend(self.label(format!("{} {outcome}", recipe.name), t_end - self.t_start, t_end));

        let status = if aborted { RunStatus::Aborted } else { RunStatus::Done };
        {
            let mut st = self.shared.state.lock();
            let run = st.runs.get_mut(&self.run_id).expect("active run exists");
            run.status = status;
            run.t_end = Some(t_end);
            run.labels = labels;
            st.active = None;
            st.abort_requested = false;
            self.shared.cv.notify_all();
        }
        self.sink.event(&ProtocolEvent::ProtocolStatus { run_id: self.run_id, recipe_id: recipe.recipe_id, status });
    }
}
