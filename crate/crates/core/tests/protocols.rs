use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use skill_core::protocols::{
    bundled_recipes, AbortHandle, EngineOptions, MemorySink, Phase, ProtocolEngine, ProtocolError, ProtocolEvent,
    ProtocolRecipe, ProtocolSink, RunStatus, StepKind,
};
use skill_core::store::{Store, StoreConfig};

fn energizing() -> ProtocolRecipe {
    bundled_recipes().into_iter().find(|r| r.recipe_id == "energizing-breath").unwrap()
}

#[test]
fn energizing_breath_matches_transcript() {
    let r = energizing();
    assert_eq!(r.name, "Energizing Breath");
    let steps = r.expand();
    assert_eq!(steps.len(), 18);
    assert_eq!(steps[0].title, "Coming up: Inhale 4 counts");
    assert_eq!(steps[0].text, "Get ready—breathe in through your nose for 4 counts.");
    assert_eq!(steps[1].heading(), "Inhale - 4s");
    assert_eq!(steps[1].text, "Breathe in 1..2..3..4");
    assert_eq!(steps[2].title, "Coming up: Hold 2 counts");
    assert_eq!(steps[2].text, "Hold your breath for 2 counts.");
    assert_eq!(steps[3].heading(), "Hold - 2s");
    assert_eq!(steps[3].text, "Hold... 1..2");
    assert_eq!(steps[4].title, "Coming up: Exhale 4 counts");
    assert_eq!(steps[4].text, "Exhale through your mouth for 4 counts.");
    assert_eq!(steps[5].text, "Breathe out... 1..2..3..4");
    let timed: Vec<f64> = steps.iter().filter(|s| s.kind == StepKind::Timed).map(|s| s.seconds).collect();
    assert_eq!(timed, [4.0, 2.0, 4.0].repeat(3));
    assert_eq!(r.timed_seconds(), 30.0);
    assert!(steps.iter().enumerate().all(|(i, s)| s.index == i + 1));
    assert_eq!(steps, r.expand());
}

#[test]
fn box_breathing_expands_to_32() {
    let r = bundled_recipes().into_iter().find(|r| r.recipe_id == "box-breathing").unwrap();
    assert_eq!((r.rounds, r.phases.len()), (4, 4));
    assert_eq!(r.expand().len(), 32);
    assert!(r.tags.iter().any(|t| t == "calm"));
}

#[test]
fn zero_rounds_rejected() {
    let text = r#"{"name":"x","rounds":0,"phases":[{"title":"a","announce":"b","cue":"c","seconds":1}]}"#;
    assert!(matches!(ProtocolRecipe::from_json(text), Err(ProtocolError::Parse { ref field, .. }) if field == "rounds"));
}

#[test]
fn load_from_file_registers_recipe() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.json");
    std::fs::write(
        &path,
        r#"{"name":"One Breath","rounds":1,"tags":["calm"],"phases":[{"title":"Inhale","announce":"a","cue":"In","seconds":1}]}"#,
    )
    .unwrap();
    let engine = ProtocolEngine::new(Arc::new(MemorySink::default()), None, EngineOptions::default());
    let loaded = engine.load_dir(dir.path()).unwrap();
    assert_eq!(loaded.len(), 1);
    let r = engine.recipe("one-breath").unwrap();
    assert_eq!(r.expand().len(), 2);
    assert_eq!(engine.recipes().len(), 3);
}

fn store() -> (tempfile::TempDir, Arc<Store>) {
    let dir = tempfile::tempdir().unwrap();
    let s = Store::open(dir.path(), StoreConfig::default()).unwrap();
    (dir, Arc::new(s))
}

#[test]
fn completed_run_leaves_two_labels() {
    let (_dir, store) = store();
    let engine = ProtocolEngine::new(Arc::new(MemorySink::default()), Some(store.clone()), EngineOptions { time_scale: 0.001, ..EngineOptions::default() });
    let run = engine.start("energizing-breath", true).unwrap();
    engine.confirm(run.run_id).unwrap();
    let done = engine.wait(run.run_id, Duration::from_secs(10)).unwrap();
    assert_eq!(done.status, RunStatus::Done);
    assert_eq!(done.labels.len(), 2);
    let texts: Vec<String> = store.labels().into_iter().map(|l| l.text).collect();
    assert_eq!(texts, ["Energizing Breath start", "Energizing Breath done"]);
    let start = store.label(done.labels[0]).unwrap();
    assert_eq!(Some(start.t), done.t_start);
    assert!(done.step_log.windows(2).all(|w| w[0].index < w[1].index));
}

/// Requests an abort as soon as a given step goes out.
struct AbortAt {
    index: usize,
    handle: parking_lot::Mutex<Option<AbortHandle>>,
    inner: MemorySink,
}

impl ProtocolSink for AbortAt {
    fn notify(&self, title: &str, text: &str) -> Result<(), String> {
        self.inner.notify(title, text)
    }

    fn say(&self, text: &str) -> Result<(), String> {
        self.inner.say(text)
    }

    fn event(&self, event: &ProtocolEvent) {
        if let ProtocolEvent::ProtocolStep { run_id, step, .. } = event {
            if step.index == self.index {
                self.handle.lock().as_ref().unwrap().request(*run_id);
            }
        }
        self.inner.event(event);
    }
}

#[test]
fn abort_at_step_five() {
    let (_dir, store) = store();
    let sink = Arc::new(AbortAt { index: 5, handle: Default::default(), inner: MemorySink::default() });
    let engine = ProtocolEngine::new(sink.clone(), Some(store.clone()), EngineOptions { time_scale: 0.001, ..EngineOptions::default() });
    *sink.handle.lock() = Some(engine.abort_handle());
    let run = engine.start("energizing-breath", false).unwrap();
    let out = engine.wait(run.run_id, Duration::from_secs(10)).unwrap();
    assert_eq!(out.status, RunStatus::Aborted);
    assert_eq!(out.step_log.len(), 5);
    let texts: Vec<String> = store.labels().into_iter().map(|l| l.text).collect();
    assert_eq!(texts, ["Energizing Breath start", "Energizing Breath aborted"]);
}

#[test]
fn abort_interrupts_a_long_phase_promptly() {
    let engine = ProtocolEngine::new(Arc::new(MemorySink::default()), None, EngineOptions::default());
    let run = engine.start("box-breathing", false).unwrap();
    std::thread::sleep(Duration::from_millis(200));
    let t = Instant::now();
    let out = engine.abort(run.run_id).unwrap();
    assert!(t.elapsed() < Duration::from_secs(1), "{:?}", t.elapsed());
    assert_eq!(out.status, RunStatus::Aborted);
    assert_eq!(out.step_log.len(), 2);
}

#[test]
fn first_step_within_100ms_of_confirm() {
    let engine = ProtocolEngine::new(Arc::new(MemorySink::default()), None, EngineOptions { time_scale: 0.01, ..EngineOptions::default() });
    let run = engine.start("energizing-breath", true).unwrap();
    let confirmed = Instant::now();
    engine.confirm(run.run_id).unwrap();
    loop {
        if !engine.run(run.run_id).unwrap().step_log.is_empty() {
            break;
        }
        assert!(confirmed.elapsed() < Duration::from_millis(100));
        std::thread::yield_now();
    }
    engine.wait(run.run_id, Duration::from_secs(5));
}

#[test]
fn scaled_schedule_has_bounded_drift() {
    // 30 s of phases at 1/10 speed: every step lands within 50 ms of its planned offset.
    let scale = 0.1;
    let engine = ProtocolEngine::new(Arc::new(MemorySink::default()), None, EngineOptions { time_scale: scale, ..EngineOptions::default() });
    let recipe = energizing();
    let run = engine.start(&recipe.recipe_id, false).unwrap();
    let done = engine.wait(run.run_id, Duration::from_secs(10)).unwrap();
    let mut planned = 0.0;
    for (step, log) in recipe.expand().iter().zip(&done.step_log) {
        assert!((log.offset_s - planned).abs() < 0.05, "step {} at {} vs {}", step.index, log.offset_s, planned);
        planned += step.seconds * scale;
    }
    let total = done.t_end.unwrap() - done.t_start.unwrap();
    assert!((total - 3.0).abs() < 0.05, "{total}");
}

fn recipe_strategy() -> impl Strategy<Value = ProtocolRecipe> {
    (1u32..6, prop::collection::vec((0u32..9, "[A-Za-z]{1,8}"), 1..6)).prop_map(|(rounds, phases)| ProtocolRecipe {
        format_version: 1,
        recipe_id: String::new(),
        name: "Generated".into(),
        rounds,
        tags: vec![],
        description: String::new(),
        phases: phases
            .into_iter()
            .map(|(s, title)| Phase { title, announce: "a".into(), cue: "c".into(), seconds: s as f64 })
            .collect(),
    })
}

proptest! {
    #[test]
    fn step_count_invariant(r in recipe_strategy()) {
        let text = serde_json::to_string(&r).unwrap();
        let parsed = ProtocolRecipe::from_json(&text).unwrap();
        let steps = parsed.expand();
        prop_assert_eq!(steps.len(), r.rounds as usize * r.phases.len() * 2);
        prop_assert_eq!(steps.iter().filter(|s| s.kind == StepKind::Announce).count(), steps.len() / 2);
        let timed: f64 = steps.iter().map(|s| s.seconds).sum();
        prop_assert!((timed - parsed.timed_seconds()).abs() < 1e-9);
        prop_assert_eq!(steps, parsed.expand());
    }
}
