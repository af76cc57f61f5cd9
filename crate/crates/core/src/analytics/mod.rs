//! Range comparison, automatic range choice and coarse sleep summaries over
//! stored epoch metrics.

mod sleep;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use sleep::{sleep_summary, stage_of, SleepSegment, SleepStage, SleepSummary, SLEEP_MIN_DURATION_S, SMOOTHING_HALF_WIDTH_S};

use crate::dsp::EpochMetrics;
use crate::store::{mean_metrics, SessionRecord, Store};

/// |Δ| below this is "flat".
pub const FLAT_EPSILON: f64 = 1e-9;
pub const DEFAULT_COMPARE_CAP_S: f64 = 24.0 * 3600.0;

/// Metrics shown in the compare table, in display order.
pub const TABLE_METRICS: [&str; 9] = [
    "relaxation",
    "engagement",
    "meditation",
    "hr",
    "drowsiness",
    "mood",
    "snr",
    "stillness",
    "cognitive_load",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("range {side} contains no epochs")]
    EmptyRange { side: char },
    #[error("range {side} spans {span_s:.0} s, above the {cap_s:.0} s cap (pass the override flag to allow)")]
    CapExceeded { side: char, span_s: f64, cap_s: f64 },
    #[error("invalid range {side}: start {t_start} is not before end {t_end}")]
    Range { side: char, t_start: f64, t_end: f64 },
    #[error("cannot pick ranges automatically: {0}; pass --a-start/--a-end/--b-start/--b-end")]
    AutoSelect(String),
    #[error("no sleep data: {0}")]
    NoSleepData(String),
}

pub type Result<T, E = AnalyticsError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeRange {
    pub t_start: f64,
    pub t_end: f64,
}

impl TimeRange {
    pub fn new(t_start: f64, t_end: f64) -> Self {
        Self { t_start, t_end }
    }

    pub fn span_s(&self) -> f64 {
        self.t_end - self.t_start
    }

    fn check(&self, side: char, cap_s: Option<f64>) -> Result<()> {
        if !(self.t_start < self.t_end) {
            return Err(AnalyticsError::Range { side, t_start: self.t_start, t_end: self.t_end });
        }
        match cap_s {
            Some(cap_s) if self.span_s() > cap_s => {
                Err(AnalyticsError::CapExceeded { side, span_s: self.span_s(), cap_s })
            }
            _ => Ok(()),
        }
    }
}

impl From<&SessionRecord> for TimeRange {
    fn from(s: &SessionRecord) -> Self {
        Self { t_start: s.t_start, t_end: s.t_end }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Flat,
}

impl Direction {
    pub fn of(delta: f64) -> Self {
        if delta.abs() < FLAT_EPSILON {
            Direction::Flat
        } else if delta > 0.0 {
            Direction::Up
        } else {
            Direction::Down
        }
    }

    pub fn glyph(self) -> &'static str {
        match self {
            Direction::Up => "↑",
            Direction::Down => "↓",
            Direction::Flat => "-",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    HigherIsBetter,
    LowerIsBetter,
}

/// Which direction of change counts as an improvement, per metric. Metrics
/// absent from the map are reported but left unclassified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarityMap {
    pub entries: Vec<(String, Polarity)>,
}

impl Default for PolarityMap {
    fn default() -> Self {
        let names = [
            "tar", "bar", "dtr", "tbr", "hr", "stress", "sef95", "relaxation", "mood", "faa", "rmsd",
            "snr", "rel_alpha", "rel_beta", "rel_theta", "rel_delta", "pse",
        ];
        Self { entries: names.iter().map(|n| (n.to_string(), Polarity::HigherIsBetter)).collect() }
    }
}

impl PolarityMap {
    pub fn get(&self, metric: &str) -> Option<Polarity> {
        self.entries.iter().find(|(n, _)| n == metric).map(|(_, p)| *p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub metric: String,
    pub mean_a: f64,
    pub mean_b: f64,
    /// `mean_b - mean_a`, unrounded.
    pub delta: f64,
    /// `100 * delta / |mean_a|`; `None` when `mean_a` is zero.
    pub delta_pct: Option<f64>,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub range_a: TimeRange,
    pub range_b: TimeRange,
    /// Ranges were chosen by [`auto_ranges`].
    pub auto: bool,
    pub epochs_a: usize,
    pub epochs_b: usize,
    /// Every metric, in canonical order.
    pub rows: Vec<CompareRow>,
    pub improved: Vec<String>,
    pub declined: Vec<String>,
    pub flat: Vec<String>,
    pub unclassified: Vec<String>,
    /// Arguments that reproduce this report, without the program name.
    pub rerun_command: String,
}

impl CompareReport {
    pub fn row(&self, metric: &str) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    /// Per-range span limit; `None` lifts it.
    pub cap_s: Option<f64>,
    pub polarity: PolarityMap,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self { cap_s: Some(DEFAULT_COMPARE_CAP_S), polarity: PolarityMap::default() }
    }
}

fn fmt_time(t: f64) -> String {
    if t.fract() == 0.0 && t.abs() < 1e15 {
        format!("{}", t as i64)
    } else {
        format!("{t}")
    }
}

pub fn rerun_command(a: TimeRange, b: TimeRange) -> String {
    format!(
        "compare --a-start {} --a-end {} --b-start {} --b-end {}",
        fmt_time(a.t_start),
        fmt_time(a.t_end),
        fmt_time(b.t_start),
        fmt_time(b.t_end)
    )
}

/// Builds the report from two metric means. Pure arithmetic, no store access.
pub fn compare_means(
    a: &EpochMetrics<f64>,
    b: &EpochMetrics<f64>,
    polarity: &PolarityMap,
) -> (Vec<CompareRow>, [Vec<String>; 4]) {
    let mut rows = Vec::new();
    for (i, name) in EpochMetrics::<f64>::NAMES.iter().enumerate() {
        let (ma, mb) = (a.values()[i], b.values()[i]);
        let delta = mb - ma;
        let delta_pct = (ma != 0.0).then(|| 100.0 * delta / ma.abs());
        rows.push(CompareRow {
            metric: name.to_string(),
            mean_a: ma,
            mean_b: mb,
            delta,
            delta_pct,
            direction: Direction::of(delta),
        });
    }
    let (mut improved, mut declined, mut flat, mut unclassified) = (vec![], vec![], vec![], vec![]);
    // classified metrics follow the polarity map's order
    for (name, pol) in &polarity.entries {
        let Some(r) = rows.iter().find(|r| &r.metric == name) else { continue };
        match (r.direction, pol) {
            (Direction::Flat, _) => flat.push(name.clone()),
            (Direction::Up, Polarity::HigherIsBetter) | (Direction::Down, Polarity::LowerIsBetter) => {
                improved.push(name.clone())
            }
            _ => declined.push(name.clone()),
        }
    }
    for r in &rows {
        if polarity.get(&r.metric).is_none() {
            unclassified.push(r.metric.clone());
        }
    }
    (rows, [improved, declined, flat, unclassified])
}

/// Compares mean metrics of epochs starting in `[t_start, t_end)` of each range.
pub fn compare(store: &Store, a: TimeRange, b: TimeRange, opts: &CompareOptions) -> Result<CompareReport> {
    a.check('A', opts.cap_s)?;
    b.check('B', opts.cap_s)?;
    let (ma, na) = store.with_epochs(a.t_start, a.t_end, |e| (mean_metrics(e), e.len()));
    let (mb, nb) = store.with_epochs(b.t_start, b.t_end, |e| (mean_metrics(e), e.len()));
    let ma = ma.ok_or(AnalyticsError::EmptyRange { side: 'A' })?;
    let mb = mb.ok_or(AnalyticsError::EmptyRange { side: 'B' })?;
    let (rows, [improved, declined, flat, unclassified]) = compare_means(&ma, &mb, &opts.polarity);
    Ok(CompareReport {
        range_a: a,
        range_b: b,
        auto: false,
        epochs_a: na,
        epochs_b: nb,
        rows,
        improved,
        declined,
        flat,
        unclassified,
        rerun_command: rerun_command(a, b),
    })
}

/// A = the second most recent closed session, B = the most recent, by start time.
pub fn auto_ranges(store: &Store) -> Result<(SessionRecord, SessionRecord)> {
    let mut closed: Vec<SessionRecord> = store.sessions().into_iter().filter(|s| !s.open).collect();
    closed.sort_by(|x, y| x.t_start.total_cmp(&y.t_start).then(x.session_id.cmp(&y.session_id)));
    match closed.len() {
        0 | 1 => Err(AnalyticsError::AutoSelect(format!(
            "need at least 2 closed sessions, found {}",
            closed.len()
        ))),
        n => Ok((closed[n - 2].clone(), closed[n - 1].clone())),
    }
}

/// [`compare`] over [`auto_ranges`].
pub fn compare_auto(store: &Store, opts: &CompareOptions) -> Result<CompareReport> {
    let (a, b) = auto_ranges(store)?;
    let mut r = compare(store, (&a).into(), (&b).into(), opts)?;
    r.auto = true;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(pairs: &[(&str, f64)]) -> EpochMetrics<f64> {
        let mut out = EpochMetrics::default();
        for (k, v) in pairs {
            *out.get_mut(k).unwrap() = *v;
        }
        out
    }

    #[test]
    fn fixture_compare_rows() {
        let a = m(&[("relaxation", 13.55), ("snr", -6.30), ("hr", 54.39), ("engagement", 66.55)]);
        let b = m(&[("relaxation", 11.23), ("snr", -13.45), ("hr", 78.93), ("engagement", 69.55)]);
        let (rows, [improved, declined, flat, unclassified]) = compare_means(&a, &b, &PolarityMap::default());
        let get = |n: &str| rows.iter().find(|r| r.metric == n).unwrap().clone();
        let r = get("relaxation");
        assert_eq!(format!("{:.2}", r.delta), "-2.32");
        assert_eq!(format!("{:.1}", r.delta_pct.unwrap()), "-17.1");
        assert_eq!(r.direction, Direction::Down);
        let s = get("snr");
        assert_eq!(format!("{:.2}", s.delta), "-7.15");
        assert_eq!(format!("{:.1}", s.delta_pct.unwrap()), "-113.5");
        assert_eq!(format!("{:.1}", get("hr").delta_pct.unwrap()), "45.1");
        assert_eq!(format!("{:.1}", get("engagement").delta_pct.unwrap()), "4.5");
        assert_eq!(improved, vec!["hr"]);
        assert_eq!(declined, vec!["relaxation", "snr"]);
        assert!(flat.contains(&"tar".to_string()));
        assert!(unclassified.contains(&"engagement".to_string()));
        assert_eq!(get("meditation").delta_pct, None);
        assert_eq!(get("meditation").direction, Direction::Flat);
    }

    #[test]
    fn lower_is_better_polarity() {
        let p = PolarityMap { entries: vec![("stress".into(), Polarity::LowerIsBetter)] };
        let (_, [improved, declined, ..]) = compare_means(&m(&[("stress", 5.0)]), &m(&[("stress", 3.0)]), &p);
        assert_eq!(improved, vec!["stress"]);
        assert!(declined.is_empty());
    }

    #[test]
    fn rerun_line() {
        let a = TimeRange::new(1772417176.0, 1772445015.0);
        let b = TimeRange::new(1772447823.0, 1772450119.0);
        assert_eq!(
            rerun_command(a, b),
            "compare --a-start 1772417176 --a-end 1772445015 --b-start 1772447823 --b-end 1772450119"
        );
    }

    #[test]
    fn direction_threshold() {
        assert_eq!(Direction::of(5e-10), Direction::Flat);
        assert_eq!(Direction::of(-2e-9), Direction::Down);
        assert_eq!(Direction::of(1.0).glyph(), "↑");
    }
}
