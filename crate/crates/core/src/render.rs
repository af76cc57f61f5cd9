//! Human-readable terminal layouts of command results.
//!
//! Every renderer works from the JSON data payload, so output produced from a
//! saved `--json` response is identical to a live one.

use std::collections::BTreeMap;

use chrono::TimeZone;
use chrono_tz::Tz;
use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::analytics::{CompareReport, CompareRow, Direction, SleepSummary, TimeRange, TABLE_METRICS};
use crate::api::{ApiEvent, LabelView, MetricInfo};
use crate::dsp::EpochMetrics;
use crate::protocols::{ProtocolRun, RunStatus};
use crate::search::{PathResult, ProjectionJob, SearchReport, SearchResult};
use crate::store::{EmbeddingRef, SessionRecord, StateSnapshot};

/// Metrics shown on one-line summaries, in order, when present.
pub const SUMMARY_METRICS: [&str; 4] = ["relaxation", "engagement", "hr", "mood"];

/// Minimum widths of the compare columns metric, A, B, Δ, Δ%.
const COMPARE_MIN_WIDTHS: [usize; 5] = [10, 5, 5, 5, 6];

#[derive(Debug, Clone)]
pub struct RenderOptions {
    pub tz: Tz,
    /// Program name used in the rerun hint.
    pub program: String,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { tz: chrono_tz::UTC, program: "skill".into() }
    }
}

/// `3/2/2026, 5:37:03 AM EST`
pub fn fmt_datetime(t: f64, tz: Tz) -> String {
    match tz.timestamp_opt(t.floor() as i64, 0).single() {
        Some(d) => d.format("%-m/%-d/%Y, %-I:%M:%S %p %Z").to_string(),
        None => format!("{t}"),
    }
}

/// `5:37:03 AM EST`
pub fn fmt_clock(t: f64, tz: Tz) -> String {
    match tz.timestamp_opt(t.floor() as i64, 0).single() {
        Some(d) => d.format("%-I:%M:%S %p %Z").to_string(),
        None => format!("{t}"),
    }
}

/// `7h 43m` from one hour up, `38m 16s` below.
pub fn fmt_duration(seconds: f64) -> String {
    let s = seconds.max(0.0).floor() as u64;
    if s >= 3600 {
        format!("{}h {}m", s / 3600, (s % 3600) / 60)
    } else {
        format!("{}m {}s", s / 60, s % 60)
    }
}

/// Integers without a fractional part, other values as-is.
pub fn fmt_number(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

fn signed(x: f64, decimals: usize) -> String {
    let s = format!("{:.*}", decimals, x.abs());
    let zero = s.chars().all(|c| c == '0' || c == '.');
    if x < 0.0 && !zero {
        format!("-{s}")
    } else {
        format!("+{s}")
    }
}

fn delta_cell(r: &CompareRow) -> String {
    if r.direction == Direction::Flat {
        "+0.00".into()
    } else {
        signed(r.delta, 2)
    }
}

fn pct_cell(r: &CompareRow) -> String {
    match (r.delta_pct, r.direction) {
        (_, Direction::Flat) => "0.0%".into(),
        (None, _) => "n/a".into(),
        (Some(p), _) => format!("{}%", signed(p, 1)),
    }
}

/// Left-aligned columns. A cell wider than its column's minimum widens that
/// column for every row; the last column follows a single space.
fn table(rows: &[Vec<String>], min_widths: &[usize]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            let widest = rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0);
            widest.max(min_widths.get(c).copied().unwrap_or(0))
        })
        .collect();
    let mut out = String::new();
    for r in rows {
        let mut line = String::new();
        for (c, s) in r.iter().enumerate() {
            if c > 0 {
                line.push_str(if c + 1 == r.len() { " " } else { "  " });
            }
            line.push_str(&format!("{s:<w$}", w = widths[c]));
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn range_line(side: char, r: TimeRange, auto: bool, tz: Tz) -> String {
    format!(
        "{side}: {}-{} ({}{} - {}, {})",
        fmt_number(r.t_start),
        fmt_number(r.t_end),
        if auto { "auto: " } else { "" },
        fmt_datetime(r.t_start, tz),
        fmt_datetime(r.t_end, tz),
        fmt_duration(r.span_s())
    )
}

pub fn render_compare(r: &CompareReport, opts: &RenderOptions) -> String {
    let mut out = String::from("$ compare\n");
    out.push_str(&range_line('A', r.range_a, r.auto, opts.tz));
    out.push('\n');
    out.push_str(&range_line('B', r.range_b, r.auto, opts.tz));
    out.push_str("\n\n");
    out.push_str(&format!("rerun: {} {}\n\n", opts.program, r.rerun_command));
    out.push_str(&format!("Compare Insights ({} vs {} epochs)\n", r.epochs_a, r.epochs_b));
    let mut rows = vec![["metric", "A", "B", "Δ", "Δ%", "dir"].map(String::from).to_vec()];
    for name in TABLE_METRICS {
        let Some(row) = r.row(name) else { continue };
        rows.push(vec![
            name.to_string(),
            format!("{:.2}", row.mean_a),
            format!("{:.2}", row.mean_b),
            delta_cell(row),
            pct_cell(row),
            row.direction.glyph().to_string(),
        ]);
    }
    out.push_str(&table(&rows, &COMPARE_MIN_WIDTHS));
    out.push('\n');
    let list = |v: &[String]| if v.is_empty() { "(none)".to_string() } else { v.join(", ") };
    out.push_str(&format!("▲ improved: {}\n", list(&r.improved)));
    out.push_str(&format!("▼ declined: {}\n", list(&r.declined)));
    out
}

fn metrics_line(values: &BTreeMap<String, f64>) -> Option<String> {
    let parts: Vec<String> = SUMMARY_METRICS
        .iter()
        .filter_map(|m| values.get(*m).map(|v| format!("{m}={v:.2}")))
        .collect();
    (!parts.is_empty()).then(|| parts.join(" "))
}

fn nonzero_summary(m: &EpochMetrics<f64>) -> BTreeMap<String, f64> {
    SUMMARY_METRICS
        .iter()
        .filter_map(|n| m.get(n).filter(|v| *v != 0.0).map(|v| (n.to_string(), v)))
        .collect()
}

fn result_title(r: &SearchResult, tz: Tz) -> String {
    match (&r.reference, &r.text) {
        (EmbeddingRef::Label { label_id }, Some(text)) => format!("#{label_id} \"{text}\""),
        (EmbeddingRef::Label { label_id }, None) => format!("#{label_id}"),
        (EmbeddingRef::Window { session_id, t_start, .. }, _) => {
            format!("session {session_id} window {}", fmt_clock(*t_start, tz))
        }
    }
}

pub fn render_search(cmd: &str, r: &SearchReport, opts: &RenderOptions) -> String {
    let query = if r.mode == "text" { format!("\"{}\"", r.query) } else { r.query.clone() };
    let mut out = format!("$ {cmd} {query} (mode: {}, n: {})\n\n", r.mode, r.n);
    out.push_str(&format!("model: {}\n", r.model_id));
    out.push_str(&format!("n: {} results: {}\n", r.n, r.results.len()));
    for res in &r.results {
        out.push('\n');
        out.push_str(&result_title(res, opts.tz));
        out.push('\n');
        out.push_str(&format!(
            "similarity: {}% distance: {:.4} model: {}\n",
            res.similarity_pct, res.distance, res.model_id
        ));
        out.push_str(&format!(
            "recorded: {} ({}s window)\n",
            fmt_datetime(res.recorded_at, opts.tz),
            fmt_number(res.window_s)
        ));
        if let Some(line) = metrics_line(&res.metric_snapshot) {
            out.push_str(&line);
            out.push('\n');
        }
        out.push_str(&format!("epg: {}\n", res.session_day));
    }
    out
}

pub fn render_sessions(sessions: &[SessionRecord], opts: &RenderOptions) -> String {
    let mut out = format!("$ sessions\n\n# {} session(s)\n\n", sessions.len());
    for s in sessions {
        out.push_str(&format!(
            "{} {} - {} {} {} epochs{}\n",
            s.session_day,
            fmt_datetime(s.t_start, opts.tz),
            fmt_clock(s.t_end, opts.tz),
            fmt_duration(s.duration_s()),
            s.epoch_count,
            if s.open { " (recording)" } else { "" }
        ));
    }
    out
}

fn render_state(s: &StateSnapshot, opts: &RenderOptions) -> String {
    let mut out = format!(
        "$ get-state\nstate at {} (last {}s, {} epochs)\n",
        fmt_datetime(s.t, opts.tz),
        fmt_number(s.horizon_s),
        s.epoch_count
    );
    match &s.metrics {
        Some(m) if !s.no_data => {
            let line = SUMMARY_METRICS
                .iter()
                .map(|n| format!("{n}={:.2}", m.get(n).unwrap_or(0.0)))
                .collect::<Vec<_>>()
                .join(" ");
            out.push_str(&line);
            out.push('\n');
        }
        _ => out.push_str("no data in horizon\n"),
    }
    if let Some(l) = &s.last_label {
        out.push_str(&format!("last label: #{} \"{}\" at {}\n", l.label_id, l.text, fmt_datetime(l.t, opts.tz)));
    }
    if let Some(a) = &s.active_session {
        out.push_str(&format!("active session: {} since {}\n", a.session_id, fmt_datetime(a.t_start, opts.tz)));
    }
    out
}

fn label_line(l: &LabelView, tz: Tz) -> String {
    let mut s = format!("#{} \"{}\" {} ({}s window)", l.label_id, l.text, fmt_datetime(l.t, tz), fmt_number(l.window_s));
    if let Some(m) = metrics_line(&l.metric_snapshot) {
        s.push_str(" ");
        s.push_str(&m);
    }
    s
}

fn render_run(cmd: &str, r: &ProtocolRun, opts: &RenderOptions) -> String {
    let mut out = format!("$ {cmd}\n> **{}** - {} steps\n", r.name, r.total_steps);
    out.push_str(&format!("run {}: {} ({}/{} steps)\n", r.run_id, r.status, r.step_log.len(), r.total_steps));
    if r.status == RunStatus::AwaitingConfirm {
        out.push_str("waiting for confirmation: protocol-confirm to begin, protocol-abort to decline\n");
    }
    for s in &r.step_log {
        out.push_str(&format!("Step {}/{}: {}\n", s.index, r.total_steps, s.title));
    }
    if !r.labels.is_empty() {
        let ids: Vec<String> = r.labels.iter().map(|l| format!("#{l}")).collect();
        out.push_str(&format!("labels: {}\n", ids.join(", ")));
    }
    if let (Some(s), Some(e)) = (r.t_start, r.t_end) {
        out.push_str(&format!("ran {} - {}\n", fmt_datetime(s, opts.tz), fmt_clock(e, opts.tz)));
    }
    out
}

fn render_sleep(s: &SleepSummary, opts: &RenderOptions) -> String {
    let mut out = format!(
        "$ sleep\n{} - {} {} {} epochs\n",
        fmt_datetime(s.range.t_start, opts.tz),
        fmt_clock(s.range.t_end, opts.tz),
        fmt_duration(s.duration_s),
        s.epoch_count
    );
    for (stage, secs) in &s.stage_totals_s {
        let pct = if s.duration_s > 0.0 { 100.0 * secs / s.duration_s } else { 0.0 };
        out.push_str(&format!("{stage}: {} ({pct:.1}%)\n", fmt_duration(*secs)));
    }
    out.push_str(&format!("segments: {}\n", s.segments.len()));
    if let Some(line) = metrics_line(&nonzero_summary(&s.means)) {
        out.push_str(&line);
        out.push('\n');
    }
    out
}

fn render_job(cmd: &str, j: &ProjectionJob) -> String {
    let method = serde_json::to_value(j.request.method).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    let status = serde_json::to_value(j.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    let mut out = format!("$ {cmd}\njob {} {method}: {status} ({:.0}%)\n", j.job_id, 100.0 * j.progress);
    if let Some(points) = &j.result {
        out.push_str(&format!("points: {}\n", points.len()));
    }
    if let Some(e) = &j.error {
        out.push_str(&format!("error: {e}\n"));
    }
    out
}

fn render_path(p: &PathResult, opts: &RenderOptions) -> String {
    let mut out = format!("$ search-path\n{} hops{}\n", p.path.len().saturating_sub(1), if p.complete { "" } else { " (incomplete)" });
    for r in &p.path {
        out.push_str(&match r {
            EmbeddingRef::Window { session_id, t_start, .. } => {
                format!("session {session_id} window {}\n", fmt_datetime(*t_start, opts.tz))
            }
            EmbeddingRef::Label { label_id } => format!("label #{label_id}\n"),
        });
    }
    out
}

fn field<T: DeserializeOwned>(data: &Value, key: &str) -> Result<T, String> {
    serde_json::from_value(data.get(key).cloned().unwrap_or(Value::Null)).map_err(|e| format!("{key}: {e}"))
}

fn whole<T: DeserializeOwned>(data: &Value) -> Result<T, String> {
    serde_json::from_value(data.clone()).map_err(|e| e.to_string())
}

/// Renders the data payload of `cmd` for a terminal.
pub fn render(cmd: &str, data: &Value, opts: &RenderOptions) -> Result<String, String> {
    Ok(match cmd {
        "compare" => render_compare(&whole(data)?, opts),
        "search-labels" | "search-exg" => render_search(cmd, &whole(data)?, opts),
        "search-path" => render_path(&whole(data)?, opts),
        "sessions" => render_sessions(&field::<Vec<SessionRecord>>(data, "sessions")?, opts),
        "get-state" => render_state(&whole(data)?, opts),
        "labels-list" => {
            let labels: Vec<LabelView> = field(data, "labels")?;
            let mut out = format!("$ labels-list\n{} label(s)\n", labels.len());
            for l in &labels {
                out.push_str(&label_line(l, opts.tz));
                out.push('\n');
            }
            out
        }
        "label-add" => format!("$ label-add\nadded {}\n", label_line(&whole(data)?, opts.tz)),
        "protocol-start" | "protocol-confirm" | "protocol-abort" | "protocol-status" => {
            render_run(cmd, &whole(data)?, opts)
        }
        "protocols-list" => {
            let runs: Vec<ProtocolRun> = field(data, "runs")?;
            let mut out = format!("$ protocols-list\n{} run(s)\n", runs.len());
            for r in &runs {
                out.push_str(&format!("run {}: {} {} ({}/{} steps)\n", r.run_id, r.name, r.status, r.step_log.len(), r.total_steps));
            }
            out
        }
        "recipes-list" => {
            let recipes: Vec<Value> = field(data, "recipes")?;
            let mut out = format!("$ recipes-list\n{} recipe(s)\n", recipes.len());
            for r in &recipes {
                let tags: Vec<String> = r["tags"].as_array().into_iter().flatten().filter_map(|t| t.as_str().map(String::from)).collect();
                out.push_str(&format!(
                    "{}: {} - {} steps, {}s timed [{}]\n",
                    r["recipe_id"].as_str().unwrap_or(""),
                    r["name"].as_str().unwrap_or(""),
                    r["steps"],
                    fmt_number(r["timed_seconds"].as_f64().unwrap_or(0.0)),
                    tags.join(", ")
                ));
            }
            out
        }
        "sleep" => render_sleep(&whole(data)?, opts),
        "project-start" => format!("$ project-start\njob {} started\n", data["job_id"]),
        "project-status" | "project-cancel" => render_job(cmd, &whole(data)?),
        "data-reference" => {
            let metrics: Vec<MetricInfo> = field(data, "metrics")?;
            let mut out = String::from("$ data-reference\n");
            for m in metrics {
                out.push_str(&format!("{} [{}]: {}\n", m.name, m.unit, m.description));
            }
            out
        }
        "status" => {
            let mut out = String::from("$ status\n");
            match data.get("device").filter(|d| !d.is_null()) {
                Some(d) => out.push_str(&format!(
                    "device: {} ({} ch @ {} Hz){}\n",
                    d["name"].as_str().unwrap_or("?"),
                    d["channel_count"],
                    fmt_number(d["sample_rate_hz"].as_f64().unwrap_or(0.0)),
                    if data["streaming"].as_bool() == Some(true) { ", streaming" } else { "" }
                )),
                None => out.push_str("device: none\n"),
            }
            match data.get("session").filter(|s| !s.is_null()) {
                Some(s) => {
                    let s: SessionRecord = whole(s)?;
                    out.push_str(&format!("session: {} since {} ({} epochs)\n", s.session_id, fmt_datetime(s.t_start, opts.tz), s.epoch_count));
                }
                None => out.push_str("session: none\n"),
            }
            if let Some(m) = data.get("last_metrics").filter(|m| !m.is_null()) {
                let m: EpochMetrics<f64> = whole(m)?;
                let t = data["last_epoch_t"].as_f64().unwrap_or(0.0);
                let line = SUMMARY_METRICS.iter().map(|n| format!("{n}={:.2}", m.get(n).unwrap_or(0.0))).collect::<Vec<_>>().join(" ");
                out.push_str(&format!("last epoch {}: {line}\n", fmt_datetime(t, opts.tz)));
            }
            out.push_str(&format!("stored: {} epochs, {} labels\n", data["epoch_count"], data["label_count"]));
            out
        }
        _ => format!("$ {cmd}\n{}\n", serde_json::to_string_pretty(data).map_err(|e| e.to_string())?),
    })
}

/// One line per streamed event.
pub fn render_event(event: &ApiEvent, tz: Tz) -> String {
    match event {
        ApiEvent::Metrics { t, session_id, quality, metrics } => {
            let parts: Vec<String> = SUMMARY_METRICS
                .iter()
                .filter_map(|m| metrics.get(m).map(|v| format!("{m}={v:.2}")))
                .collect();
            format!("[{}] metrics session {session_id} q={quality:.2} {}", fmt_clock(*t, tz), parts.join(" "))
        }
        ApiEvent::ProtocolStep(e) => {
            format!("run {}: step {}/{}: {}", e.run_id, e.step.index, e.total, e.step.title)
        }
        ApiEvent::ProtocolStatus(e) => format!("run {} ({}): {}", e.run_id, e.recipe_id, e.status),
        ApiEvent::JobProgress(p) => {
            format!("job {}: {:?} {:.0}%", p.job_id, p.status, p.progress * 100.0).to_lowercase()
        }
        ApiEvent::LabelAdded { label_id, text, t } => {
            format!("[{}] label #{label_id} \"{text}\"", fmt_clock(*t, tz))
        }
    }
}
