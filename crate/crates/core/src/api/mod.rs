//! Command table, wire envelopes and the transport-independent dispatcher.
//!
//! Transports (WebSocket, HTTP, in-process) hand a command name and a JSON
//! argument object to [`Api::dispatch`] and wrap the outcome in a
//! [`ResponseEnvelope`].

mod dispatch;
mod glossary;
mod pipeline;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use dispatch::{Api, ApiConfig, CallContext, LabelView, LiveStatus};
pub use glossary::{metric_glossary, metrics_markdown, MetricInfo};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineReport};

use crate::dsp::EpochMetrics;
use crate::protocols::ProtocolEvent;
use crate::search::JobProgress;

/// Wire format version advertised over mDNS and in `status`.
pub const API_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_PORT: u16 = 8375;
/// HTTP header (and WebSocket handshake header) carrying the owner token.
pub const OWNER_TOKEN_HEADER: &str = "x-skill-owner-token";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandEnvelope {
    pub id: Value,
    pub cmd: String,
    #[serde(default = "empty_args")]
    pub args: Value,
}

fn empty_args() -> Value {
    Value::Object(Map::new())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseEnvelope {
    pub id: Value,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

impl ResponseEnvelope {
    pub fn from_result(id: Value, result: Result<Value, ApiError>) -> Self {
        match result {
            Ok(data) => Self { id, ok: true, data: Some(data), error: None },
            Err(e) => Self { id, ok: false, data: None, error: Some(e.body()) },
        }
    }
}

/// Documented error codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCode {
    UnknownCommand,
    BadRequest,
    BadArgs,
    NotFound,
    OwnerOnly,
    BadToken,
    ReadOnlyTransport,
    Busy,
    InvalidState,
    EmptyRange,
    CapExceeded,
    TooFew,
    NoSleepData,
    AutoSelect,
    Embedding,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 16] = [
        ErrorCode::UnknownCommand,
        ErrorCode::BadRequest,
        ErrorCode::BadArgs,
        ErrorCode::NotFound,
        ErrorCode::OwnerOnly,
        ErrorCode::BadToken,
        ErrorCode::ReadOnlyTransport,
        ErrorCode::Busy,
        ErrorCode::InvalidState,
        ErrorCode::EmptyRange,
        ErrorCode::CapExceeded,
        ErrorCode::TooFew,
        ErrorCode::NoSleepData,
        ErrorCode::AutoSelect,
        ErrorCode::Embedding,
        ErrorCode::Internal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::UnknownCommand => "unknown-command",
            ErrorCode::BadRequest => "bad-request",
            ErrorCode::BadArgs => "bad-args",
            ErrorCode::NotFound => "not-found",
            ErrorCode::OwnerOnly => "owner-only",
            ErrorCode::BadToken => "bad-token",
            ErrorCode::ReadOnlyTransport => "read-only-transport",
            ErrorCode::Busy => "busy",
            ErrorCode::InvalidState => "invalid-state",
            ErrorCode::EmptyRange => "empty-range",
            ErrorCode::CapExceeded => "cap-exceeded",
            ErrorCode::TooFew => "too-few",
            ErrorCode::NoSleepData => "no-sleep-data",
            ErrorCode::AutoSelect => "auto-select",
            ErrorCode::Embedding => "embedding",
            ErrorCode::Internal => "internal",
        }
    }

    pub fn meaning(self) -> &'static str {
        match self {
            ErrorCode::UnknownCommand => "cmd is not in the command table",
            ErrorCode::BadRequest => "the envelope is not valid JSON or lacks id/cmd",
            ErrorCode::BadArgs => "args failed validation; the message names the field",
            ErrorCode::NotFound => "the referenced label, run, job or window does not exist",
            ErrorCode::OwnerOnly => "the command needs the owner token",
            ErrorCode::BadToken => "an owner token was sent but does not match",
            ErrorCode::ReadOnlyTransport => "mutating command sent over HTTP; use WebSocket",
            ErrorCode::Busy => "a protocol run is already active",
            ErrorCode::InvalidState => "the run or job is not in a state that allows this",
            ErrorCode::EmptyRange => "a requested range holds no epochs",
            ErrorCode::CapExceeded => "range longer than the cap; pass allow_large_range",
            ErrorCode::TooFew => "fewer than 3 embeddings in range",
            ErrorCode::NoSleepData => "no sleep session found",
            ErrorCode::AutoSelect => "ranges could not be chosen automatically",
            ErrorCode::Embedding => "the embedding model failed",
            ErrorCode::Internal => "storage or other internal failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{}: {message}", code.as_str())]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn bad_args(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadArgs, message)
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody { code: self.code.as_str().into(), message: self.message.clone() }
    }

    pub fn from_body(body: &ErrorBody) -> Self {
        let code = ErrorCode::ALL.into_iter().find(|c| c.as_str() == body.code).unwrap_or(ErrorCode::Internal);
        Self { code, message: body.message.clone() }
    }
}

/// Event stream payloads, tagged by `type`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ApiEvent {
    Metrics { t: f64, session_id: u64, quality: f64, metrics: EpochMetrics<f64> },
    ProtocolStep(ProtocolStepEvent),
    ProtocolStatus(ProtocolStatusEvent),
    JobProgress(JobProgress),
    LabelAdded { label_id: u64, text: String, t: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolStepEvent {
    pub run_id: u64,
    pub total: usize,
    pub step: crate::protocols::Step,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolStatusEvent {
    pub run_id: u64,
    pub recipe_id: String,
    pub status: crate::protocols::RunStatus,
}

impl ApiEvent {
    pub const KINDS: [&'static str; 5] = ["metrics", "protocol-step", "protocol-status", "job-progress", "label-added"];

    pub fn kind(&self) -> &'static str {
        match self {
            ApiEvent::Metrics { .. } => "metrics",
            ApiEvent::ProtocolStep(_) => "protocol-step",
            ApiEvent::ProtocolStatus(_) => "protocol-status",
            ApiEvent::JobProgress(_) => "job-progress",
            ApiEvent::LabelAdded { .. } => "label-added",
        }
    }
}

impl From<ProtocolEvent> for ApiEvent {
    fn from(e: ProtocolEvent) -> Self {
        match e {
            ProtocolEvent::ProtocolStep { run_id, total, step } => {
                ApiEvent::ProtocolStep(ProtocolStepEvent { run_id, total, step })
            }
            ProtocolEvent::ProtocolStatus { run_id, recipe_id, status } => {
                ApiEvent::ProtocolStatus(ProtocolStatusEvent { run_id, recipe_id, status })
            }
        }
    }
}

/// Receives events for fan-out to subscribers.
pub trait EventSink: Send + Sync {
    fn publish(&self, event: ApiEvent);
}

pub struct NullEvents;

impl EventSink for NullEvents {
    fn publish(&self, _: ApiEvent) {}
}

/// Keeps every event; for tests and logs.
#[derive(Default)]
pub struct CollectEvents(pub parking_lot::Mutex<Vec<ApiEvent>>);

impl EventSink for CollectEvents {
    fn publish(&self, event: ApiEvent) {
        self.0.lock().push(event);
    }
}

/// One skill document per group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SkillGroup {
    DataReference,
    Labels,
    Protocols,
    Recipes,
    Search,
    Sessions,
    Sleep,
    Status,
    Streaming,
    Transport,
}

impl SkillGroup {
    pub const ALL: [SkillGroup; 10] = [
        SkillGroup::DataReference,
        SkillGroup::Labels,
        SkillGroup::Protocols,
        SkillGroup::Recipes,
        SkillGroup::Search,
        SkillGroup::Sessions,
        SkillGroup::Sleep,
        SkillGroup::Status,
        SkillGroup::Streaming,
        SkillGroup::Transport,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            SkillGroup::DataReference => "data-reference",
            SkillGroup::Labels => "labels",
            SkillGroup::Protocols => "protocols",
            SkillGroup::Recipes => "recipes",
            SkillGroup::Search => "search",
            SkillGroup::Sessions => "sessions",
            SkillGroup::Sleep => "sleep",
            SkillGroup::Status => "status",
            SkillGroup::Streaming => "streaming",
            SkillGroup::Transport => "transport",
        }
    }

    /// Directory name of the group's skill file.
    pub fn skill_name(self) -> String {
        format!("neuroskill-{}", self.slug())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArgKind {
    Text,
    Number,
    Integer,
    Bool,
    /// A JSON value given inline.
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArgSpec {
    /// JSON field name; the CLI flag is the same with `-` for `_`.
    pub name: &'static str,
    pub kind: ArgKind,
    pub required: bool,
    /// Accepted without a flag, in declaration order.
    pub positional: bool,
    pub help: &'static str,
}

impl ArgSpec {
    pub fn flag(&self) -> String {
        format!("--{}", self.name.replace('_', "-"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CommandSpec {
    pub name: &'static str,
    pub group: SkillGroup,
    pub summary: &'static str,
    /// Never changes the store; allowed over HTTP.
    pub read_only: bool,
    /// Needs the owner token; absent from every agent-facing surface.
    pub owner_only: bool,
    /// Handled by the connection, not the dispatcher (stream subscriptions).
    pub connection: bool,
    pub args: &'static [ArgSpec],
    /// CLI arguments after the command name, each runnable against the fixture store.
    pub examples: &'static [&'static str],
}

const fn arg(name: &'static str, kind: ArgKind, help: &'static str) -> ArgSpec {
    ArgSpec { name, kind, required: false, positional: false, help }
}

const fn req(name: &'static str, kind: ArgKind, help: &'static str) -> ArgSpec {
    ArgSpec { name, kind, required: true, positional: false, help }
}

const fn pos(name: &'static str, kind: ArgKind, required: bool, help: &'static str) -> ArgSpec {
    ArgSpec { name, kind, required, positional: true, help }
}

use ArgKind::*;

const fn cmd(
    name: &'static str,
    group: SkillGroup,
    read_only: bool,
    summary: &'static str,
    args: &'static [ArgSpec],
    examples: &'static [&'static str],
) -> CommandSpec {
    CommandSpec { name, group, summary, read_only, owner_only: false, connection: false, args, examples }
}

/// Every command the daemon understands.
pub const COMMANDS: &[CommandSpec] = &[
    cmd("status", SkillGroup::Status, true, "Device, active session and the latest epoch metrics.", &[], &[""]),
    cmd(
        "get-state",
        SkillGroup::Status,
        true,
        "Mean metrics over the last horizon_s seconds, the newest label and the active session.",
        &[
            arg("horizon_s", Number, "seconds to average over (default 60)"),
            arg("at", Number, "unix time to look back from (default now)"),
        ],
        &["", "--horizon-s 300 --at 1772450119"],
    ),
    cmd(
        "sessions",
        SkillGroup::Sessions,
        true,
        "Recorded sessions, newest day first.",
        &[arg("limit", Integer, "return at most this many")],
        &["", "--limit 3"],
    ),
    cmd(
        "compare",
        SkillGroup::Sessions,
        true,
        "Mean metrics of range A against range B with deltas and directions. Without ranges, compares the last two sessions.",
        &[
            arg("a_start", Number, "range A start, unix seconds"),
            arg("a_end", Number, "range A end (exclusive)"),
            arg("b_start", Number, "range B start"),
            arg("b_end", Number, "range B end (exclusive)"),
            arg("allow_large_range", Bool, "lift the 24 h per-range cap"),
        ],
        &["", "--a-start 1772417176 --a-end 1772445015 --b-start 1772447823 --b-end 1772450119"],
    ),
    cmd(
        "search-labels",
        SkillGroup::Search,
        true,
        "Labels nearest to a text query, with similarity, time and the metrics recorded with them.",
        &[pos("query", Text, true, "free text"), arg("n", Integer, "number of results (default 18)")],
        &["\"movie\"", "\"focus\" --n 5"],
    ),
    cmd(
        "search-exg",
        SkillGroup::Search,
        true,
        "Signal windows nearest to an anchor window, or to the window under a label.",
        &[
            arg("label_id", Integer, "anchor on the window recorded with this label"),
            arg("session_id", Integer, "anchor window session (with t_start)"),
            arg("t_start", Number, "anchor window start"),
            arg("n", Integer, "number of results (default 18)"),
            arg("include_self", Bool, "keep the anchor itself in the results"),
        ],
        &["--label-id 24 --n 5"],
    ),
    cmd(
        "search-path",
        SkillGroup::Search,
        true,
        "Greedy chain of signal windows leading from one label's state to another's.",
        &[
            req("from", Integer, "start label id"),
            req("to", Integer, "target label id"),
            arg("k", Integer, "neighbours considered per hop (default 5)"),
            arg("budget", Integer, "maximum hops (default 50)"),
        ],
        &["--from 24 --to 46"],
    ),
    cmd(
        "project-start",
        SkillGroup::Search,
        false,
        "Starts a 2-D projection job over the embeddings in a range; returns a job id at once.",
        &[
            req("t_start", Number, "range start"),
            req("t_end", Number, "range end"),
            arg("method", Text, "pca (default) or force-layout"),
            arg("params", Json, "force-layout parameters, e.g. {\"iterations\":100}"),
            arg("allow_large_range", Bool, "lift the 24 h range cap"),
        ],
        &["--t-start 1772447823 --t-end 1772450119"],
    ),
    cmd(
        "project-status",
        SkillGroup::Search,
        true,
        "Status, progress and (when done) the points of a projection job.",
        &[req("job_id", Integer, "job id from project-start")],
        &["--job-id 1"],
    ),
    cmd(
        "project-cancel",
        SkillGroup::Search,
        false,
        "Cancels a queued or running projection job.",
        &[req("job_id", Integer, "job id")],
        &["--job-id 1"],
    ),
    cmd(
        "label-add",
        SkillGroup::Labels,
        false,
        "Attaches a text label to the last window_s seconds; the metrics of that window are stored with it.",
        &[
            pos("text", Text, true, "what the human is doing or feeling"),
            arg("window_s", Number, "window length in seconds (default 18)"),
            arg("t", Number, "label time (default now)"),
        ],
        &["\"calm after reading\"", "\"focused\" --window-s 1 --t 1772450119"],
    ),
    cmd(
        "labels-list",
        SkillGroup::Labels,
        true,
        "Most recent labels first.",
        &[arg("limit", Integer, "how many (default 10)")],
        &["", "--limit 3"],
    ),
    cmd(
        "recipes-list",
        SkillGroup::Recipes,
        true,
        "Installed exercise recipes with their tags, rounds and phases.",
        &[],
        &[""],
    ),
    cmd(
        "protocols-list",
        SkillGroup::Protocols,
        true,
        "Protocol runs, the active one last.",
        &[],
        &[""],
    ),
    cmd(
        "protocol-start",
        SkillGroup::Protocols,
        false,
        "Starts a recipe. By default the run waits for protocol-confirm before any step plays.",
        &[
            pos("recipe", Text, true, "recipe id or name"),
            arg("require_confirm", Bool, "wait for confirmation (default true)"),
        ],
        &["energizing-breath"],
    ),
    cmd(
        "protocol-status",
        SkillGroup::Protocols,
        true,
        "State and step log of a run (default: the active or latest one).",
        &[arg("run_id", Integer, "run id")],
        &[""],
    ),
    cmd(
        "protocol-confirm",
        SkillGroup::Protocols,
        false,
        "Confirms a run waiting for confirmation; steps start playing.",
        &[arg("run_id", Integer, "run id (default: the pending run)")],
        &[""],
    ),
    cmd(
        "protocol-abort",
        SkillGroup::Protocols,
        false,
        "Declines a pending run or stops a running one.",
        &[arg("run_id", Integer, "run id (default: the active run)")],
        &[""],
    ),
    cmd(
        "sleep",
        SkillGroup::Sleep,
        true,
        "Sleep summary of a range, or of the latest night session of 3 h or more.",
        &[arg("t_start", Number, "range start"), arg("t_end", Number, "range end")],
        &["", "--t-start 1772417176 --t-end 1772445015"],
    ),
    cmd(
        "data-reference",
        SkillGroup::DataReference,
        true,
        "Glossary of every metric: name, unit and meaning.",
        &[],
        &[""],
    ),
    CommandSpec {
        name: "stream-subscribe",
        group: SkillGroup::Streaming,
        summary: "Subscribes this connection to live events (metrics, protocol-step, protocol-status, job-progress, label-added).",
        read_only: true,
        owner_only: false,
        connection: true,
        args: &[arg("events", Json, "list of event types (default all)"), arg("seconds", Number, "CLI only: stop after this long")],
        examples: &["--seconds 2"],
    },
    CommandSpec {
        name: "stream-unsubscribe",
        group: SkillGroup::Streaming,
        summary: "Stops live events on this connection.",
        read_only: true,
        owner_only: false,
        connection: true,
        args: &[],
        examples: &[""],
    },
    CommandSpec {
        name: "delete",
        group: SkillGroup::Sessions,
        summary: "Removes stored data. Owner only.",
        read_only: false,
        owner_only: true,
        connection: false,
        args: &[
            arg("all", Bool, "remove everything"),
            arg("t_start", Number, "range start"),
            arg("t_end", Number, "range end"),
        ],
        examples: &[],
    },
];

pub fn command(name: &str) -> Option<&'static CommandSpec> {
    COMMANDS.iter().find(|c| c.name == name)
}

/// Commands documented for agents: everything except owner-only ones.
pub fn agent_commands() -> impl Iterator<Item = &'static CommandSpec> {
    COMMANDS.iter().filter(|c| !c.owner_only)
}

/// Splits an example line into words, honouring double quotes.
pub fn split_words(line: &str) -> Result<Vec<String>, ApiError> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let (mut quoted, mut any) = (false, false);
    for c in line.chars() {
        match c {
            '"' => {
                quoted = !quoted;
                any = true;
            }
            c if c.is_whitespace() && !quoted => {
                if any {
                    out.push(std::mem::take(&mut cur));
                    any = false;
                }
            }
            c => {
                cur.push(c);
                any = true;
            }
        }
    }
    if quoted {
        return Err(ApiError::bad_args("unbalanced quote"));
    }
    if any {
        out.push(cur);
    }
    Ok(out)
}

fn parse_value(spec: &ArgSpec, raw: &str) -> Result<Value, ApiError> {
    let bad = || ApiError::bad_args(format!("{}: cannot read `{raw}` as {:?}", spec.flag(), spec.kind));
    Ok(match spec.kind {
        ArgKind::Text => Value::String(raw.to_string()),
        ArgKind::Number => {
            let x: f64 = raw.parse().map_err(|_| bad())?;
            serde_json::Number::from_f64(x).map(Value::Number).ok_or_else(bad)?
        }
        ArgKind::Integer => Value::from(raw.parse::<u64>().map_err(|_| bad())?),
        ArgKind::Bool => Value::Bool(raw.parse().map_err(|_| bad())?),
        ArgKind::Json => serde_json::from_str(raw).map_err(|_| bad())?,
    })
}

/// Turns CLI words (after the command name) into the command's JSON args.
pub fn parse_cli_args(spec: &CommandSpec, words: &[String]) -> Result<Value, ApiError> {
    let mut out = Map::new();
    let mut positionals = spec.args.iter().filter(|a| a.positional);
    let mut i = 0;
    while i < words.len() {
        let w = &words[i];
        if let Some(flag) = w.strip_prefix("--") {
            let (name, inline) = match flag.split_once('=') {
                Some((n, v)) => (n, Some(v.to_string())),
                None => (flag, None),
            };
            let a = spec
                .args
                .iter()
                .find(|a| a.name == name.replace('-', "_"))
                .ok_or_else(|| ApiError::bad_args(format!("{}: unknown flag --{name}", spec.name)))?;
            let raw = match inline {
                Some(v) => v,
                None if a.kind == ArgKind::Bool
                    && !words.get(i + 1).is_some_and(|n| n == "true" || n == "false") =>
                {
                    "true".into()
                }
                None => {
                    i += 1;
                    words.get(i).cloned().ok_or_else(|| ApiError::bad_args(format!("{} needs a value", a.flag())))?
                }
            };
            out.insert(a.name.into(), parse_value(a, &raw)?);
        } else {
            let a = positionals
                .next()
                .ok_or_else(|| ApiError::bad_args(format!("{}: unexpected argument `{w}`", spec.name)))?;
            out.insert(a.name.into(), parse_value(a, w)?);
        }
        i += 1;
    }
    for a in spec.args.iter().filter(|a| a.required) {
        if !out.contains_key(a.name) {
            return Err(ApiError::bad_args(format!("{}: missing {}", spec.name, a.flag())));
        }
    }
    Ok(Value::Object(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<String> {
        split_words(s).unwrap()
    }

    #[test]
    fn names_are_unique_and_groups_covered() {
        let mut names: Vec<_> = COMMANDS.iter().map(|c| c.name).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), COMMANDS.len());
        for g in SkillGroup::ALL {
            if g != SkillGroup::Transport {
                assert!(agent_commands().any(|c| c.group == g), "{g:?}");
            }
        }
    }

    #[test]
    fn example_lines_parse() {
        for c in COMMANDS {
            for e in c.examples {
                parse_cli_args(c, &words(e)).unwrap_or_else(|err| panic!("{} {e}: {err}", c.name));
            }
        }
    }

    #[test]
    fn cli_words_to_args() {
        let c = command("search-labels").unwrap();
        assert_eq!(parse_cli_args(c, &words("\"Screen sharing\" --n 5")).unwrap(), serde_json::json!({"query": "Screen sharing", "n": 5}));
        let c = command("compare").unwrap();
        let v = parse_cli_args(c, &words("--a-start 1 --a-end=2 --allow-large-range")).unwrap();
        assert_eq!(v, serde_json::json!({"a_start": 1.0, "a_end": 2.0, "allow_large_range": true}));
        assert!(parse_cli_args(c, &words("--bogus 1")).is_err());
        assert!(parse_cli_args(command("search-path").unwrap(), &words("--from 1")).is_err());
        assert!(parse_cli_args(command("status").unwrap(), &words("extra")).is_err());
    }

    #[test]
    fn error_codes_round_trip() {
        for c in ErrorCode::ALL {
            let e = ApiError::new(c, "x");
            assert_eq!(ApiError::from_body(&e.body()), e);
            let json = serde_json::to_value(c).unwrap();
            assert_eq!(json, Value::String(c.as_str().into()));
        }
    }
}
