use std::collections::BTreeMap;

use chrono::{Duration as ChronoDuration, NaiveTime, TimeZone};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use super::{AnalyticsError, Result, TimeRange};
use crate::dsp::EpochMetrics;
use crate::scalar::safe_ratio;
use crate::store::{mean_metrics, EpochRecord, SessionRecord, Store};

/// Shortest session considered a night's sleep.
pub const SLEEP_MIN_DURATION_S: f64 = 3.0 * 3600.0;
/// Half of the 5-minute majority window.
pub const SMOOTHING_HALF_WIDTH_S: f64 = 150.0;
const NIGHT_START_HOUR: u32 = 21;
const NIGHT_END_HOUR: u32 = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SleepStage {
    WakeLike,
    LightLike,
    DeepLike,
}

impl SleepStage {
    pub fn name(self) -> &'static str {
        match self {
            SleepStage::WakeLike => "wake-like",
            SleepStage::LightLike => "light-like",
            SleepStage::DeepLike => "deep-like",
        }
    }
}

/// Stage from the slow/fast power ratio `(delta + theta) / (alpha + beta)`:
/// below 1 wake-like, 1 to 2 light-like, above 2 deep-like.
pub fn stage_of(m: &EpochMetrics<f64>) -> SleepStage {
    let r = safe_ratio(m.abs_delta + m.abs_theta, m.abs_alpha + m.abs_beta);
    if r < 1.0 {
        SleepStage::WakeLike
    } else if r <= 2.0 {
        SleepStage::LightLike
    } else {
        SleepStage::DeepLike
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SleepSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub stage: SleepStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SleepSummary {
    pub range: TimeRange,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<u64>,
    pub duration_s: f64,
    pub epoch_count: usize,
    pub means: EpochMetrics<f64>,
    /// Consecutive, non-overlapping, covering `range` exactly.
    pub segments: Vec<SleepSegment>,
    pub stage_totals_s: BTreeMap<String, f64>,
}

/// Whether `[s, e]` overlaps some local 21:00–11:00 night in `tz`.
fn overlaps_night(s: f64, e: f64, tz: Tz) -> bool {
    let Some(start) = tz.timestamp_opt(s.floor() as i64, 0).single() else { return false };
    let mut day = start.date_naive() - ChronoDuration::days(1);
    let night_start = NaiveTime::from_hms_opt(NIGHT_START_HOUR, 0, 0).expect("valid time");
    let night_end = NaiveTime::from_hms_opt(NIGHT_END_HOUR, 0, 0).expect("valid time");
    loop {
        let ws = tz.from_local_datetime(&day.and_time(night_start)).earliest();
        let we = tz.from_local_datetime(&(day + ChronoDuration::days(1)).and_time(night_end)).latest();
        if let (Some(ws), Some(we)) = (ws, we) {
            let (ws, we) = (ws.timestamp() as f64, we.timestamp() as f64);
            if ws > e {
                return false;
            }
            if s < we && e > ws {
                return true;
            }
        }
        day += ChronoDuration::days(1);
    }
}

/// Most recent session of at least three hours that overlaps a local night.
pub fn default_sleep_session(store: &Store, tz: Tz) -> Option<SessionRecord> {
    store
        .sessions()
        .into_iter()
        .filter(|s| s.duration_s() >= SLEEP_MIN_DURATION_S && overlaps_night(s.t_start, s.t_end, tz))
        .max_by(|a, b| a.t_start.total_cmp(&b.t_start))
}

/// Majority stage within ±[`SMOOTHING_HALF_WIDTH_S`] of each epoch; ties keep
/// the epoch's own stage, otherwise the lighter stage.
fn smooth(epochs: &[EpochRecord]) -> Vec<SleepStage> {
    let raw: Vec<SleepStage> = epochs.iter().map(|e| stage_of(&e.metrics)).collect();
    let idx = |s: SleepStage| s as usize;
    let mut counts = [0usize; 3];
    let (mut lo, mut hi) = (0, 0);
    let mut out = Vec::with_capacity(raw.len());
    for (i, e) in epochs.iter().enumerate() {
        while hi < epochs.len() && epochs[hi].t_start <= e.t_start + SMOOTHING_HALF_WIDTH_S {
            counts[idx(raw[hi])] += 1;
            hi += 1;
        }
        while epochs[lo].t_start < e.t_start - SMOOTHING_HALF_WIDTH_S {
            counts[idx(raw[lo])] -= 1;
            lo += 1;
        }
        let best = *counts.iter().max().expect("three stages");
        let stage = if counts[idx(raw[i])] == best {
            raw[i]
        } else {
            [SleepStage::WakeLike, SleepStage::LightLike, SleepStage::DeepLike]
                .into_iter()
                .find(|s| counts[idx(*s)] == best)
                .expect("some stage holds the max")
        };
        out.push(stage);
    }
    out
}

/// Summarises `range`, or the default sleep session when `range` is `None`.
pub fn sleep_summary(store: &Store, range: Option<TimeRange>, tz: Tz) -> Result<SleepSummary> {
    let (range, session_id) = match range {
        Some(r) => {
            if !(r.t_start < r.t_end) {
                return Err(AnalyticsError::Range { side: 'S', t_start: r.t_start, t_end: r.t_end });
            }
            (r, None)
        }
        None => {
            let s = default_sleep_session(store, tz).ok_or_else(|| {
                AnalyticsError::NoSleepData("no session of 3 h or more overlapping 21:00-11:00".into())
            })?;
            ((&s).into(), Some(s.session_id))
        }
    };
    store.with_epochs(range.t_start, range.t_end, |epochs| {
        let means = mean_metrics(epochs)
            .ok_or_else(|| AnalyticsError::NoSleepData("no epochs in the selected range".into()))?;
        let stages = smooth(epochs);
        let mut segments: Vec<SleepSegment> = Vec::new();
        for (e, stage) in epochs.iter().zip(stages) {
            match segments.last_mut() {
                Some(last) if last.stage == stage => {}
                Some(last) => {
                    last.t_end = e.t_start;
                    segments.push(SleepSegment { t_start: e.t_start, t_end: e.t_start, stage });
                }
                None => segments.push(SleepSegment { t_start: range.t_start, t_end: range.t_start, stage }),
            }
        }
        if let Some(last) = segments.last_mut() {
            last.t_end = range.t_end;
        }
        let mut stage_totals_s = BTreeMap::new();
        for s in &segments {
            *stage_totals_s.entry(s.stage.name().to_string()).or_insert(0.0) += s.t_end - s.t_start;
        }
        Ok(SleepSummary {
            range,
            session_id,
            duration_s: range.span_s(),
            epoch_count: epochs.len(),
            means,
            segments,
            stage_totals_s,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_thresholds() {
        let mk = |slow: f64, fast: f64| EpochMetrics {
            abs_delta: slow / 2.0,
            abs_theta: slow / 2.0,
            abs_alpha: fast / 2.0,
            abs_beta: fast / 2.0,
            ..Default::default()
        };
        assert_eq!(stage_of(&mk(0.5, 1.0)), SleepStage::WakeLike);
        assert_eq!(stage_of(&mk(1.0, 1.0)), SleepStage::LightLike);
        assert_eq!(stage_of(&mk(2.0, 1.0)), SleepStage::LightLike);
        assert_eq!(stage_of(&mk(2.5, 1.0)), SleepStage::DeepLike);
        assert_eq!(stage_of(&EpochMetrics::default()), SleepStage::WakeLike);
    }

    #[test]
    fn night_overlap() {
        let ny = chrono_tz::America::New_York;
        // 3/1/2026 9:06:16 PM EST to 3/2 4:50:15 AM EST
        assert!(overlaps_night(1772417176.0, 1772445015.0, ny));
        // 3/2/2026 noon to 6 PM EST
        assert!(!overlaps_night(1772470800.0, 1772492400.0, ny));
        // 3/2 10:30 AM to 2 PM EST touches the morning tail
        assert!(overlaps_night(1772465400.0, 1772478000.0, ny));
    }
}
