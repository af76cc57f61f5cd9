use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use serde_json::json;
use skill_core::agent::{
    emit_skills, example_call, execute_plan, parse_skills, plan, replay, skill_docs, AgentSnapshot, RuleTable,
    MAX_DOC_WORDS, METRICS_FILE,
};
use skill_core::api::{agent_commands, command, Api, ApiConfig, CallContext, NullEvents, SkillGroup};
use skill_core::fixture::build_fixture;
use skill_core::store::{Store, StoreConfig};

const T: f64 = 1772450119.0;

fn fixture_api() -> (tempfile::TempDir, Api) {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(build_fixture(dir.path()).unwrap());
    (dir, Api::new(store, Arc::new(NullEvents), ApiConfig::default()))
}

#[test]
fn emits_the_ten_skill_files() {
    let dir = tempfile::tempdir().unwrap();
    let docs = emit_skills(dir.path()).unwrap();
    let names: Vec<String> = docs.iter().map(|d| d.name.clone()).collect();
    assert_eq!(
        names,
        [
            "neuroskill-data-reference",
            "neuroskill-labels",
            "neuroskill-protocols",
            "neuroskill-recipes",
            "neuroskill-search",
            "neuroskill-sessions",
            "neuroskill-sleep",
            "neuroskill-status",
            "neuroskill-streaming",
            "neuroskill-transport",
        ]
    );
    for d in &docs {
        assert!(dir.path().join(&d.path).is_file());
    }
    let metrics = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    assert!(metrics.starts_with("# Metrics"));
    let entries = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(entries, 11);
}

#[test]
fn emission_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    emit_skills(a.path()).unwrap();
    emit_skills(b.path()).unwrap();
    for d in skill_docs() {
        let x = std::fs::read(a.path().join(&d.path)).unwrap();
        let y = std::fs::read(b.path().join(&d.path)).unwrap();
        assert_eq!(x, y, "{}", d.name);
    }
}

#[test]
fn docs_stay_within_budget_and_never_mention_deletion() {
    for d in skill_docs() {
        assert!(d.word_count() <= MAX_DOC_WORDS, "{} has {} words", d.name, d.word_count());
        assert!(!d.text.to_lowercase().contains("delete"), "{} mentions delete", d.name);
        assert!(d.text.contains("## Context budget"), "{}", d.name);
    }
}

#[test]
fn parsing_recovers_the_command_table() {
    let dir = tempfile::tempdir().unwrap();
    emit_skills(dir.path()).unwrap();
    let parsed = parse_skills(dir.path()).unwrap();
    assert_eq!(parsed.len(), 10);
    let commands: Vec<_> = parsed.iter().flat_map(|s| s.commands.clone()).collect();
    let want: BTreeSet<&str> = agent_commands().map(|c| c.name).collect();
    let got: BTreeSet<&str> = commands.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(got, want);
    assert_eq!(commands.len(), want.len());
    for p in &commands {
        let spec = command(&p.name).unwrap();
        assert_eq!(p.skill, spec.group.skill_name());
        assert_eq!(p.summary, spec.summary);
        assert_eq!(p.read_only, spec.read_only, "{}", p.name);
        assert_eq!(p.connection, spec.connection, "{}", p.name);
        assert_eq!(p.args.len(), spec.args.len(), "{}", p.name);
        for (a, s) in p.args.iter().zip(spec.args) {
            assert_eq!((a.name.as_str(), a.required, a.positional, a.help.as_str()), (s.name, s.required, s.positional, s.help));
            assert_eq!(a.kind, serde_json::to_value(s.kind).unwrap().as_str().unwrap());
        }
    }
    // every documented command has at least one example
    let examples: Vec<String> = parsed.iter().flat_map(|s| s.examples.clone()).collect();
    for c in agent_commands() {
        assert!(examples.iter().any(|e| example_call(e).unwrap().0.name == c.name), "{} lacks an example", c.name);
    }
    assert!(SkillGroup::ALL.iter().all(|g| parsed.iter().any(|s| s.name == g.skill_name())));
}

#[test]
fn every_example_runs_against_the_fixture() {
    let (_d, api) = fixture_api();
    let dir = tempfile::tempdir().unwrap();
    emit_skills(dir.path()).unwrap();
    let mut ran = 0;
    for skill in parse_skills(dir.path()).unwrap() {
        for line in &skill.examples {
            let (spec, args) = example_call(line).unwrap_or_else(|e| panic!("{line}: {e:?}"));
            if spec.connection {
                // needs a live connection; covered by the daemon tests
                continue;
            }
            api.dispatch(spec.name, &args, &CallContext::default()).unwrap_or_else(|e| panic!("{line}: {e:?}"));
            ran += 1;
        }
    }
    let documented: usize = agent_commands().filter(|c| !c.connection).map(|c| c.examples.len()).sum();
    // plus the two transport examples
    assert_eq!(ran, documented + 2);
    api.protocols().wait(1, std::time::Duration::from_secs(5));
}

fn snapshot(api: &Api) -> AgentSnapshot {
    AgentSnapshot::fetch(api, T).unwrap()
}

fn cmds(p: &skill_core::agent::LoopPlan) -> Vec<&str> {
    p.calls.iter().map(|c| c.cmd.as_str()).collect()
}

#[test]
fn check_in_plans_follow_the_rules() {
    let (_d, api) = fixture_api();
    let rules = RuleTable::default();
    let snap = snapshot(&api);

    let sad = plan(&rules, "I feel sad", &snap);
    assert_eq!(cmds(&sad), ["get-state", "labels-list", "label-add"]);
    assert_eq!(sad.calls[2].args, json!({"text": "sad", "t": T}));
    assert_eq!(sad.calls[0].args, json!({"at": T}));

    let tired = plan(&rules, "I'm also tired", &snap);
    assert_eq!(cmds(&tired), ["sleep", "labels-list"]);

    let breath = plan(&rules, "let's do the energizing breath", &snap);
    assert_eq!(cmds(&breath), ["protocol-start"]);
    assert_eq!(breath.calls[0].args, json!({"recipe": "energizing-breath", "require_confirm": true}));
    assert!(breath.protocol.as_ref().unwrap().require_confirm);

    let other = plan(&rules, "what's up", &snap);
    assert_eq!(other.trigger.rule, "default");
    assert_eq!(cmds(&other), ["get-state"]);
}

#[test]
fn sad_transcript_labels_the_moment() {
    let run = || {
        let (_d, api) = fixture_api();
        let p = plan(&RuleTable::default(), "I feel sad", &snapshot(&api));
        let t = execute_plan(&p, &api);
        let last = api.store().labels().last().cloned().unwrap();
        (t, last)
    };
    let (t, label) = run();
    assert!(t.completed);
    assert_eq!(t.calls.iter().map(|c| c.cmd.as_str()).collect::<Vec<_>>(), ["get-state", "labels-list", "label-add"]);
    assert!(t.calls.iter().all(|c| c.ok));
    assert_eq!((label.label_id, label.text.as_str(), label.t), (68, "sad", T));
    assert!(t.response.contains("You said you feel sad."), "{}", t.response);
    assert!(t.response.contains("label #68"), "{}", t.response);
    assert!(!t.response.contains("n/a"), "{}", t.response);

    let (again, _) = run();
    assert_eq!(serde_json::to_string(&t).unwrap(), serde_json::to_string(&again).unwrap());
    let saved: skill_core::agent::Transcript = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
    let (_d, api) = fixture_api();
    assert_eq!(replay(&saved, &api), t);
}

#[test]
fn tired_without_sleep_data_degrades_gracefully() {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(Store::open(dir.path(), StoreConfig::default()).unwrap());
    let api = Api::new(store, Arc::new(NullEvents), ApiConfig::default());
    let t = execute_plan(&plan(&RuleTable::default(), "I'm also tired", &snapshot(&api)), &api);
    assert!(!t.completed);
    assert_eq!(t.calls.len(), 1);
    assert_eq!(t.calls[0].error.as_ref().unwrap().code, "no-sleep-data");
    assert!(t.response.starts_with("I have no sleep data for you yet"), "{}", t.response);
}

#[test]
fn tired_with_a_night_reports_it() {
    let (_d, api) = fixture_api();
    let t = execute_plan(&plan(&RuleTable::default(), "so tired today", &snapshot(&api)), &api);
    assert!(t.completed, "{t:?}");
    assert!(t.response.starts_with("Your last night on record lasted 7h 43m"), "{}", t.response);
}

#[test]
fn suggested_protocols_wait_for_confirmation() {
    let (_d, api) = fixture_api();
    let t = execute_plan(&plan(&RuleTable::default(), "let's do the energizing breath", &snapshot(&api)), &api);
    assert!(t.completed);
    assert_eq!(t.calls[0].data.as_ref().unwrap()["status"], "awaiting-confirm");
    std::thread::sleep(std::time::Duration::from_millis(200));
    let run = api.protocols().current().unwrap();
    assert_eq!(run.status.as_str(), "awaiting-confirm");
    assert!(run.step_log.is_empty());
    assert!(t.response.contains("Energizing Breath (18 steps)"), "{}", t.response);
}

proptest! {
    #[test]
    fn plans_only_use_documented_commands(words in proptest::collection::vec(
        prop_oneof![
            proptest::sample::select(vec![
                "sad", "tired", "energizing", "breath", "calm", "relax", "delete", "box", "breathing", "i", "feel",
            ]).prop_map(String::from),
            "[a-z]{1,8}",
        ], 0..8)) {
        let snap = AgentSnapshot {
            t: T,
            recipes: vec![
                skill_core::agent::RecipeInfo { recipe_id: "box-breathing".into(), name: "Box Breathing".into(), tags: vec!["calm".into()] },
                skill_core::agent::RecipeInfo { recipe_id: "energizing-breath".into(), name: "Energizing Breath".into(), tags: vec!["energize".into()] },
            ],
        };
        let p = plan(&RuleTable::default(), &words.join(" "), &snap);
        prop_assert!(!p.calls.is_empty());
        for c in &p.calls {
            let spec = command(&c.cmd).unwrap();
            prop_assert!(!spec.owner_only && !spec.connection);
            if c.cmd == "protocol-start" {
                prop_assert_eq!(&c.args["require_confirm"], &json!(true));
            }
        }
        prop_assert_eq!(p.protocol.is_some(), p.calls.iter().any(|c| c.cmd == "protocol-start"));
    }
}
