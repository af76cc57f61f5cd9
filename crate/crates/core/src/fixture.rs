//! A deterministic demonstration store: eight sessions across two day keys,
//! 67 labels and sparse EXG window embeddings.
//!
//! The two most recent sessions carry constant metrics, so the automatic
//! compare reproduces a known table. Other sessions vary smoothly.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::acquisition::DeviceDescriptor;
use crate::dsp::EpochMetrics;
use crate::embeddings::{EmbeddingVector, Modality};
use crate::store::{NewEpoch, Result, Store, StoreConfig};

pub const FIXTURE_EXG_MODEL: &str = "fixture/exg-v1";
const EXG_DIM: usize = 64;
/// Every n-th epoch carries a window embedding.
const EMBED_EVERY: usize = 3;

/// `(t_start, t_end, epochs)` in start order. The last two are the compare A and B.
pub const SESSIONS: [(f64, f64, usize); 8] = [
    (1772325780.0, 1772326641.0, 338),   // 2/28 7:43:00 PM EST, 14m 21s
    (1772339557.0, 1772363076.0, 9354),  // 2/28 11:32:37 PM EST, 6h 31m
    (1772405798.0, 1772409592.0, 1443),  // 3/1 5:56:38 PM EST, 1h 3m
    (1772409910.0, 1772410234.0, 129),   // 3/1 7:05:10 PM EST, 5m 24s
    (1772410942.0, 1772412254.0, 389),   // 3/1 7:22:22 PM EST, 21m 52s
    (1772415000.0, 1772416009.0, 546),   // 3/1 8:30:00 PM EST, 16m 49s
    (1772417176.0, 1772445015.0, 10798), // A: 3/1 9:06:16 PM EST, 7h 43m
    (1772447823.0, 1772450119.0, 919),   // B: 3/2 5:37:03 AM EST, 38m 16s
];

/// Labels whose id and text are pinned; the rest are filler.
const PINNED: [(u64, &str); 10] = [
    (1, "Bigs Open"),
    (2, "Bigs Closed"),
    (3, "Bigs Open"),
    (5, "Bigs Open"),
    (13, "video"),
    (24, "movie"),
    (27, "movie"),
    (46, "Screen sharing"),
    (58, "movie"),
    (67, "app"),
];
pub const LABEL_COUNT: u64 = 67;

const FILLER: [&str; 16] = [
    "focus", "reading", "coffee", "meeting", "walk", "music", "email", "lunch", "podcast", "coding",
    "breathing", "stretch", "news", "calm", "work", "call",
];

fn metrics_a() -> EpochMetrics<f64> {
    EpochMetrics {
        relaxation: 13.55,
        engagement: 66.55,
        meditation: 0.0,
        hr: 54.39,
        drowsiness: 0.0,
        mood: 66.67,
        snr: -6.30,
        stillness: 0.0,
        cognitive_load: 0.0,
        stress: 40.0,
        tar: 0.80,
        bar: 0.60,
        dtr: 1.20,
        tbr: 1.10,
        sef95: 22.0,
        faa: 0.05,
        rmsd: 45.0,
        pse: 0.80,
        rel_alpha: 0.30,
        rel_beta: 0.25,
        rel_theta: 0.20,
        rel_delta: 0.20,
        rel_gamma: 0.05,
        abs_delta: 20.0,
        abs_theta: 20.0,
        abs_alpha: 30.0,
        abs_beta: 25.0,
        abs_gamma: 5.0,
    }
}

/// B's mood is 53.29 so that Δ = −13.38 as printed in the reference table.
fn metrics_b() -> EpochMetrics<f64> {
    EpochMetrics {
        relaxation: 11.23,
        engagement: 69.55,
        meditation: 0.0,
        hr: 78.93,
        drowsiness: 0.0,
        mood: 53.29,
        snr: -13.45,
        stillness: 0.0,
        cognitive_load: 0.0,
        stress: 45.0,
        tar: 0.90,
        bar: 0.70,
        dtr: 1.30,
        tbr: 1.20,
        sef95: 24.0,
        faa: 0.02,
        rmsd: 38.0,
        pse: 0.75,
        rel_alpha: 0.28,
        rel_beta: 0.24,
        rel_theta: 0.19,
        rel_delta: 0.19,
        rel_gamma: 0.10,
        abs_delta: 19.0,
        abs_theta: 19.0,
        abs_alpha: 28.0,
        abs_beta: 24.0,
        abs_gamma: 10.0,
    }
}

/// Smoothly varying metrics for the older sessions.
fn metrics_varying(session: usize, i: usize) -> EpochMetrics<f64> {
    let ph = i as f64 / 40.0 + session as f64;
    let w = ph.sin();
    let mut m = metrics_a();
    m.relaxation = 12.0 + 3.0 * w;
    m.engagement = 75.0 + 12.0 * (ph * 0.7).cos();
    m.mood = 70.0 + 10.0 * w;
    m.hr = 60.0 + 8.0 * (ph * 0.3).sin();
    m.drowsiness = (20.0 * (ph * 0.5).sin()).max(0.0);
    m.snr = -5.0 - 2.0 * w;
    m
}

fn exg_vector(rng: &mut ChaCha8Rng, session: usize, t: f64) -> EmbeddingVector<f64> {
    let mut v: Vec<f64> = (0..EXG_DIM).map(|_| rng.random_range(-0.15..0.15)).collect();
    v[session % EXG_DIM] += 1.0;
    v[(session * 7 + 3) % EXG_DIM] += 0.5;
    EmbeddingVector::normalized(v, Modality::Exg, FIXTURE_EXG_MODEL, t).expect("non-zero vector")
}

fn epoch_time(s: (f64, f64, usize), i: usize) -> f64 {
    let (t0, t1, n) = s;
    t0 + i as f64 * (t1 - 1.0 - t0) / (n - 1) as f64
}

/// Writes the fixture into an empty directory.
pub fn build_fixture(root: &Path) -> Result<Store> {
    let store = Store::open(root, StoreConfig::default())?;
    let device = DeviceDescriptor::with_layout("Muse-S fixture", 4, 1, 256.0);
    let mut rng = ChaCha8Rng::seed_from_u64(20260302);
    let last = SESSIONS.len() - 1;
    let mut anchors: Vec<f64> = Vec::new();
    for (k, s) in SESSIONS.iter().enumerate() {
        for i in 0..s.2 {
            let t = epoch_time(*s, i);
            let metrics = match k {
                k if k == last => metrics_b(),
                k if k == last - 1 => metrics_a(),
                _ => metrics_varying(k, i),
            };
            let emb = (i % EMBED_EVERY == 0).then(|| exg_vector(&mut rng, k, t));
            if emb.is_some() && i > 0 {
                anchors.push(t);
            }
            store.append_epoch(&device, NewEpoch { t_start: t, window_s: 1.0, quality: 1.0, metrics }, emb)?;
        }
        store.close_session(Some(s.1))?;
    }
    // Labels 1..=66 sit on embedded epochs spread across all sessions; #67 falls after the last session.
    let step = anchors.len() / LABEL_COUNT as usize;
    for id in 1..=LABEL_COUNT {
        let text = PINNED
            .iter()
            .find(|(p, _)| *p == id)
            .map(|(_, t)| t.to_string())
            .unwrap_or_else(|| FILLER[(id as usize * 5) % FILLER.len()].to_string());
        let (t, window_s) = if id == LABEL_COUNT {
            (SESSIONS[last].1 + 600.0, 18.0)
        } else {
            (anchors[(id as usize - 1) * step + step / 2], if id == 24 { 1.0 } else { 18.0 })
        };
        let l = store.add_label(&text, window_s, t)?;
        debug_assert_eq!(l.label_id, id);
    }
    Ok(store)
}
