mod common;

use serde_json::{json, Value};
use skill_core::agent::{emit_skills, parse_skills};
use skill_core::api::{split_words, CallContext};

use common::*;

const TZ: &str = "America/New_York";

fn human(td: &TestDaemon, args: &[&str]) -> String {
    let addr = td.addr();
    let mut all = vec!["--addr", &addr, "--tz", TZ];
    all.extend_from_slice(args);
    let o = skill(&all);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

#[test]
fn fixture_transcripts_match_goldens() {
    let td = fixture_daemon();
    let head = format!("transport: WebSocket ws://{}\n", td.addr());
    for (args, golden) in [
        (&["compare"][..], "compare.txt"),
        (&["search-labels", "movie", "--n", "18"][..], "search_movie.txt"),
        (&["sessions"][..], "sessions.txt"),
    ] {
        let first = human(&td, args);
        assert_eq!(first, format!("{head}{}", core_golden(golden)), "{args:?}");
        assert_eq!(human(&td, args), first, "{args:?} is stable");
    }
}

#[test]
fn explicit_address_replaces_the_preamble() {
    let td = fixture_daemon();
    let out = human(&td, &["status"]);
    assert_eq!(out.lines().next().unwrap(), format!("transport: WebSocket ws://{}", td.addr()));
    assert!(!out.contains("discovering"));

    let o = std::process::Command::new(env!("CARGO_BIN_EXE_skill"))
        .args(["sessions", "--limit", "1"])
        .env("SKILL_ADDR", td.addr())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(stdout(&o).starts_with(&format!("transport: WebSocket ws://{}\n$ sessions", td.addr())));

    let out = human(&td, &["--http", "sessions"]);
    assert!(out.starts_with(&format!("transport: HTTP http://{}\n", td.addr())));
    // Global options are also accepted after the command.
    let addr = td.addr();
    let o = skill(&["sessions", "--addr", &addr, "--json"]);
    assert!(o.status.success());
    serde_json::from_slice::<Value>(&o.stdout).unwrap();
}

#[test]
fn exit_codes() {
    let td = fixture_daemon();
    let addr = td.addr();
    assert_eq!(skill(&["--help"]).status.code(), Some(0));
    assert_eq!(skill(&["--addr", "127.0.0.1:1", "status"]).status.code(), Some(2));
    let o = skill(&["--addr", &addr, "compare", "--a-start", "1"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad-args"));
    assert_eq!(skill(&["--addr", &addr, "sessions", "--bogus"]).status.code(), Some(4));
    assert_eq!(skill(&["--addr", &addr, "no-such-command"]).status.code(), Some(4));
    assert_eq!(skill(&["--addr", &addr, "--tz", "Mars/Olympus", "status"]).status.code(), Some(4));
    assert_eq!(skill(&["--addr", &addr, "delete", "--all"]).status.code(), Some(3));
    // Mutations over HTTP are a daemon error, not a crash.
    assert_eq!(skill(&["--addr", &addr, "--http", "label-add", "x"]).status.code(), Some(3));
}

#[test]
fn json_output_is_the_payload_and_renders_back() {
    let td = fixture_daemon();
    let api = td.daemon().api.clone();
    let dir = tempfile::tempdir().unwrap();
    for (cmd, args, words) in [
        ("compare", json!({}), vec![]),
        ("search-labels", json!({"query": "movie", "n": 18}), vec!["movie", "--n", "18"]),
        ("sessions", json!({}), vec![]),
        ("labels-list", json!({"limit": 4}), vec!["--limit", "4"]),
        ("get-state", json!({"at": 1772450119.0}), vec!["--at", "1772450119"]),
        ("sleep", json!({}), vec![]),
        ("recipes-list", json!({}), vec![]),
        ("data-reference", json!({}), vec![]),
        ("status", json!({}), vec![]),
    ] {
        let mut argv = vec!["--json", cmd];
        argv.extend(words.iter().copied());
        let json_out = human(&td, &argv);
        let got: Value = serde_json::from_str(&json_out).unwrap_or_else(|e| panic!("{cmd}: {e}\n{json_out}"));
        let want = api.dispatch(cmd, &args, &CallContext::default()).unwrap();
        assert_eq!(got, want, "{cmd}");

        let mut argv = vec![cmd];
        argv.extend(words.iter().copied());
        let text = human(&td, &argv);
        let text = text.split_once('\n').unwrap().1;
        let saved = dir.path().join(format!("{cmd}.json"));
        std::fs::write(&saved, &json_out).unwrap();
        let rendered = skill(&["--tz", TZ, "render", cmd, saved.to_str().unwrap()]);
        assert!(rendered.status.success());
        assert_eq!(stdout(&rendered), text, "{cmd} renders back");
    }
}

#[test]
fn empty_store_search_has_no_results() {
    let td = empty_daemon();
    let out = human(&td, &["search-labels", "movie"]);
    assert!(out.contains("$ search-labels \"movie\" (mode: text, n: 18)"), "{out}");
    assert!(out.contains("results: 0"), "{out}");
}

#[test]
fn every_documented_example_runs_against_the_daemon() {
    let td = fixture_daemon();
    let addr = td.addr();
    let docs = tempfile::tempdir().unwrap();
    let o = skill(&["emit-skills", docs.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 10);
    assert!(docs.path().join("METRICS.md").exists());
    let mut ran = 0;
    for doc in parse_skills(docs.path()).unwrap() {
        for line in &doc.examples {
            let words = split_words(line).unwrap();
            assert_eq!(words[0], "skill");
            let mut argv: Vec<String> = vec!["--addr".into(), addr.clone()];
            let mut it = words[1..].iter();
            while let Some(w) = it.next() {
                if w == "--addr" {
                    it.next();
                } else {
                    argv.push(w.clone());
                }
            }
            let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
            let o = skill(&argv);
            assert!(o.status.success(), "{line}: {}", String::from_utf8_lossy(&o.stderr));
            ran += 1;
        }
    }
    let in_process = tempfile::tempdir().unwrap();
    let examples: usize = emit_skills(in_process.path()).map(|_| parse_skills(in_process.path()).unwrap()).unwrap().iter().map(|d| d.examples.len()).sum();
    assert_eq!(ran, examples);
    assert!(ran > 20);
}

#[test]
fn check_in_loop_over_the_network() {
    let td = fixture_daemon();
    let out = human(&td, &["loop", "I", "feel", "sad", "--at", "1772450119"]);
    assert!(out.contains("-> get-state"), "{out}");
    assert!(out.contains("-> labels-list"), "{out}");
    assert!(out.contains("-> label-add"), "{out}");
    assert!(out.contains("label #68"), "{out}");

    let out = human(&td, &["--json", "loop", "I", "want", "an", "energizing", "breath", "exercise"]);
    let t: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(t["calls"][0]["cmd"], "protocol-start");
    assert_eq!(t["calls"][0]["data"]["status"], "awaiting-confirm");
    assert!(t["response"].as_str().unwrap().contains("Energizing Breath (18 steps)"));
}

#[test]
fn stream_subscribe_for_a_fixed_time() {
    let td = synthetic_daemon(10.0);
    let out = human(&td, &["stream-subscribe", "--seconds", "3"]);
    let metrics = out.lines().filter(|l| l.contains("] metrics session")).count();
    assert!(metrics >= 2, "{out}");
}
