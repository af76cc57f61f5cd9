use std::path::PathBuf;
use std::sync::Arc;

use serde_json::{json, Value};
use skill_core::api::{Api, ApiConfig, CallContext, NullEvents};
use skill_core::fixture::build_fixture;
use skill_core::render::{render, RenderOptions};

fn fixture_api() -> (tempfile::TempDir, Api) {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(build_fixture(dir.path()).unwrap());
    let config = ApiConfig { tz: chrono_tz::America::New_York, ..ApiConfig::default() };
    (dir, Api::new(store, Arc::new(NullEvents), config))
}

fn opts() -> RenderOptions {
    RenderOptions { tz: chrono_tz::America::New_York, program: "skill".into() }
}

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compares against the stored file; `UPDATE_GOLDEN=1` rewrites it.
fn check_golden(name: &str, got: &str) {
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, got).unwrap();
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(got, want, "{name} differs from golden output");
}

fn call(api: &Api, cmd: &str, args: Value) -> Value {
    api.dispatch(cmd, &args, &CallContext::default()).unwrap_or_else(|e| panic!("{cmd}: {e:?}"))
}

fn rendered(api: &Api, cmd: &str, args: Value) -> String {
    let data = call(api, cmd, args);
    let text = render(cmd, &data, &opts()).unwrap();
    // A saved JSON response renders the same.
    let reparsed: Value = serde_json::from_str(&serde_json::to_string(&data).unwrap()).unwrap();
    assert_eq!(render(cmd, &reparsed, &opts()).unwrap(), text, "{cmd} json round trip");
    text
}

#[test]
fn compare_matches_golden() {
    let (_d, api) = fixture_api();
    let text = rendered(&api, "compare", json!({}));
    check_golden("compare.txt", &text);
    assert!(text.contains("A: 1772417176-1772445015 (auto: 3/1/2026, 9:06:16 PM EST - 3/2/2026, 4:50:15 AM EST, 7h 43m)"));
    assert!(text.contains("B: 1772447823-1772450119 (auto: 3/2/2026, 5:37:03 AM EST - 3/2/2026, 6:15:19 AM EST, 38m 16s)"));
    assert!(text.contains("rerun: skill compare --a-start 1772417176 --a-end 1772445015 --b-start 1772447823 --b-end 1772450119"));
    assert!(text.contains("Compare Insights (10798 vs 919 epochs)"));
    assert!(text.contains("\nrelaxation      13.55  11.23   -2.32   -17.1%  ↓\n"));
    assert!(text.contains("\nengagement      66.55  69.55   +3.00   +4.5%   ↑\n"));
    assert!(text.contains("\nmeditation      0.00   0.00    +0.00   0.0%    -\n"));
    assert!(text.contains("\ncognitive_load  0.00   0.00    +0.00   0.0%    -\n"));
    assert!(text.contains("▲ improved: tar, bar, dtr, tbr, hr, stress, sef95\n"));
    assert!(text.contains("▼ declined: relaxation, mood, faa, rmsd, snr, rel_alpha, rel_beta, rel_theta, rel_delta, pse\n"));
}

#[test]
fn search_matches_golden() {
    let (_d, api) = fixture_api();
    let text = rendered(&api, "search-labels", json!({"query": "movie", "n": 18}));
    check_golden("search_movie.txt", &text);
    assert!(text.starts_with("$ search-labels \"movie\" (mode: text, n: 18)\n\nmodel: "));
    assert!(text.contains("\nn: 18 results: 18\n"));
    assert!(text.contains("#24 \"movie\"\nsimilarity: 100% distance: 0.0000 model: builtin/char-ngram-v1\nrecorded: 3/1/2026, 5:07:17 AM EST (1s window)\nrelaxation=10.80"));
}

#[test]
fn sessions_match_golden() {
    let (_d, api) = fixture_api();
    let text = rendered(&api, "sessions", json!({}));
    check_golden("sessions.txt", &text);
    assert!(text.starts_with("$ sessions\n\n# 8 session(s)\n\n"));
    assert!(text.contains("\n20260302 3/2/2026, 5:37:03 AM EST - 6:15:19 AM EST 38m 16s 919 epochs\n"));
}

#[test]
fn output_is_stable_across_runs() {
    let (_d1, a) = fixture_api();
    let (_d2, b) = fixture_api();
    for (cmd, args) in [
        ("compare", json!({})),
        ("sessions", json!({})),
        ("search-labels", json!({"query": "movie", "n": 18})),
        ("labels-list", json!({"limit": 5})),
        ("sleep", json!({})),
        ("data-reference", json!({})),
        ("recipes-list", json!({})),
    ] {
        assert_eq!(rendered(&a, cmd, args.clone()), rendered(&b, cmd, args), "{cmd}");
    }
}

#[test]
fn every_read_only_command_renders() {
    let (_d, api) = fixture_api();
    for (cmd, args) in [
        ("status", json!({})),
        ("get-state", json!({"at": 1772450119.0})),
        ("search-exg", json!({"label_id": 24, "n": 5})),
        ("search-path", json!({"from": 24, "to": 46})),
        ("protocols-list", json!({})),
    ] {
        let text = rendered(&api, cmd, args);
        assert!(text.starts_with(&format!("$ {cmd}")), "{cmd}: {text}");
    }
}
