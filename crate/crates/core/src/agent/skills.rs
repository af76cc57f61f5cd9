use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::AgentError;
use crate::api::{
    agent_commands, command, metrics_markdown, parse_cli_args, split_words, ApiError, ArgKind, CommandSpec, ErrorCode,
    SkillGroup, DEFAULT_PORT,
};

/// Program name used in documented examples.
pub const EXAMPLE_PROGRAM: &str = "skill";
pub const MAX_DOC_WORDS: usize = 2000;
pub const METRICS_FILE: &str = "METRICS.md";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillDoc {
    /// Relative to the output directory, e.g. `neuroskill-labels/SKILL.md`.
    pub path: PathBuf,
    pub name: String,
    pub title: String,
    pub description: String,
    pub when_to_use: String,
    pub text: String,
}

impl SkillDoc {
    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

struct GroupText {
    title: &'static str,
    description: &'static str,
    when_to_use: &'static str,
    intro: &'static str,
    budget: &'static str,
}

fn group_text(g: SkillGroup) -> GroupText {
    match g {
        SkillGroup::DataReference => GroupText {
            title: "Data reference",
            description: "Names, units and meanings of every metric the headband pipeline reports.",
            when_to_use: "Before interpreting a metric value, or when the human asks what a number means.",
            intro: "Every stored epoch carries the metrics below. Scores run 0-100; ratios and fractions are unitless. A metric whose sensor or calibration is missing is exactly 0, not an estimate.",
            budget: "The table is static. Read it once per conversation rather than calling data-reference repeatedly.",
        },
        SkillGroup::Labels => GroupText {
            title: "Labels",
            description: "Attach short text labels to the current moment and read recent ones.",
            when_to_use: "The human says what they are doing or feeling, or you need recent context about their day.",
            intro: "A label ties text to a time window. The daemon stores the mean metrics of that window and a text embedding with it, so labels can later be searched and compared.",
            budget: "labels-list returns the newest first; pass --limit 3 to 5 for context instead of the whole history.",
        },
        SkillGroup::Protocols => GroupText {
            title: "Protocols",
            description: "Run guided breathing and focus exercises step by step, with confirmation.",
            when_to_use: "The human asks for an exercise, or a check-in suggests one could help. Always let them confirm.",
            intro: "protocol-start prepares a run of an installed recipe. Unless require_confirm is false the run waits in awaiting-confirm; protocol-confirm plays it, protocol-abort declines or stops it. Announcements go to notifications and cues are spoken. Start and end are labelled automatically. Only one run can be active.",
            budget: "protocol-status includes the step log; poll it sparingly, or subscribe to protocol-step events instead.",
        },
        SkillGroup::Recipes => GroupText {
            title: "Recipes",
            description: "The exercise recipes installed on this machine.",
            when_to_use: "Choosing which protocol to suggest, by name or by tag such as energize or calm.",
            intro: "A recipe is a JSON file with a name, a number of rounds, tags and a list of phases (title, announce text, cue, seconds). Each phase expands into an announce step and a timed step.",
            budget: "The list is short and rarely changes; fetch it once.",
        },
        SkillGroup::Search => GroupText {
            title: "Search",
            description: "Find past labels and signal windows similar to a phrase or a moment, and project embeddings to 2-D.",
            when_to_use: "The human asks when they last felt like something, what a moment resembled, or how one state led to another.",
            intro: "Labels are searched by text similarity, windows by signal similarity. Results carry similarity, distance, the embedding model, the recording time and the metrics recorded with them. Projections run as background jobs.",
            budget: "Ask for few results (--n 5) and quote only the top ones. Projection results are large; read project-status only when the job is done and summarise.",
        },
        SkillGroup::Sessions => GroupText {
            title: "Sessions",
            description: "List recording sessions and compare the metrics of two time ranges.",
            when_to_use: "The human asks how today differs from before, or how a session went.",
            intro: "A session is a continuous recording. compare without arguments compares the two most recent sessions; with --a-start/--a-end/--b-start/--b-end it compares any two ranges. Each metric gets a delta, a percent change and a direction, and metrics are grouped into improved and declined.",
            budget: "A compare report lists every metric. Quote the improved and declined lists and the few rows that matter.",
        },
        SkillGroup::Sleep => GroupText {
            title: "Sleep",
            description: "Summaries of overnight recordings with coarse wake-like, light-like and deep-like staging.",
            when_to_use: "The human mentions being tired or asks how they slept.",
            intro: "Without a range, the latest session of at least 3 hours that overlaps 21:00-11:00 local time is used. Stages come from the ratio of slow to fast band power and are not clinical sleep stages. When no such session exists the command fails with no-sleep-data.",
            budget: "Report total duration and stage totals; the segment list is long and seldom needed.",
        },
        SkillGroup::Status => GroupText {
            title: "Status",
            description: "Device connection, the active session and the human's current state.",
            when_to_use: "At the start of a check-in, or whenever you need the human's current metrics.",
            intro: "status reports what the daemon sees now. get-state averages the last horizon_s seconds (default 60) and returns the newest label and the active session.",
            budget: "get-state is compact; prefer it over reading raw epochs.",
        },
        SkillGroup::Streaming => GroupText {
            title: "Streaming",
            description: "Live events: metrics, protocol steps and status, job progress and new labels.",
            when_to_use: "Watching the human's state change during an exercise or a task.",
            intro: "stream-subscribe is only available on a WebSocket connection. Events arrive as JSON objects with a type field: metrics, protocol-step, protocol-status, job-progress or label-added. Metrics arrive about once per second while a device streams.",
            budget: "Streams are unbounded. Subscribe for a fixed number of seconds and summarise rather than relaying every event.",
        },
        SkillGroup::Transport => GroupText {
            title: "Transport",
            description: "How to reach the daemon: discovery, WebSocket and HTTP, request and response format, error codes.",
            when_to_use: "Connecting for the first time, or interpreting an error.",
            intro: "",
            budget: "Responses are JSON; add --json to any CLI command to get the raw data instead of the formatted view.",
        },
    }
}

pub(crate) fn kind_name(k: ArgKind) -> &'static str {
    match k {
        ArgKind::Text => "text",
        ArgKind::Number => "number",
        ArgKind::Integer => "integer",
        ArgKind::Bool => "bool",
        ArgKind::Json => "json",
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn transport_body() -> String {
    let mut s = format!(
        "The daemon advertises itself over mDNS as service type `_neuroskill._tcp`, instance `skill`, host `skill.local`, port {DEFAULT_PORT}. The CLI browses for 3 seconds, tries WebSocket first and falls back to HTTP:\n\n```text\ndiscovering Skill via mDNS...\nfound: skill @ skill.local:{DEFAULT_PORT}\nauto-transport: probing WebSocket...\ntransport: WebSocket ws://127.0.0.1:{DEFAULT_PORT}\n```\n\nPass `--addr 127.0.0.1:{DEFAULT_PORT}` to skip discovery.\n\n"
    );
    s.push_str("## WebSocket\n\nConnect to `/`. Send one JSON object per message:\n\n```json\n{\"id\": 1, \"cmd\": \"sessions\", \"args\": {\"limit\": 3}}\n```\n\nEvery request gets exactly one response with the same id:\n\n```json\n{\"id\": 1, \"ok\": true, \"data\": {}}\n{\"id\": 1, \"ok\": false, \"error\": {\"code\": \"bad-args\", \"message\": \"...\"}}\n```\n\nRequests on one connection are answered in order.\n\n");
    s.push_str("## HTTP\n\n`GET /api/v1/<cmd>?name=value` runs read-only commands and returns the same envelope. Commands that change state answer read-only-transport over HTTP; send them over WebSocket.\n\n");
    s.push_str("## Error codes\n\n| code | meaning |\n|---|---|\n");
    for c in ErrorCode::ALL {
        s.push_str(&format!("| {} | {} |\n", c.as_str(), c.meaning()));
    }
    s.push('\n');
    s
}

fn command_section(c: &CommandSpec) -> String {
    let mut s = format!("### {}\n\n{}\n\n", c.name, c.summary);
    s.push_str(&format!("- read-only: {}\n", yes_no(c.read_only)));
    if c.connection {
        s.push_str("- connection: websocket only\n");
    } else if !c.read_only {
        s.push_str("- transport: websocket only\n");
    }
    s.push('\n');
    if c.args.is_empty() {
        s.push_str("No arguments.\n\n");
    } else {
        s.push_str("| arg | type | required | positional | meaning |\n|---|---|---|---|---|\n");
        for a in c.args {
            s.push_str(&format!(
                "| {} | {} | {} | {} | {} |\n",
                a.name,
                kind_name(a.kind),
                yes_no(a.required),
                yes_no(a.positional),
                a.help.replace('|', "\\|")
            ));
        }
        s.push('\n');
    }
    s
}

fn example_lines(commands: &[&CommandSpec]) -> Vec<String> {
    commands
        .iter()
        .flat_map(|c| {
            c.examples.iter().map(move |e| {
                if e.is_empty() {
                    format!("{EXAMPLE_PROGRAM} {}", c.name)
                } else {
                    format!("{EXAMPLE_PROGRAM} {} {e}", c.name)
                }
            })
        })
        .collect()
}

fn render_doc(g: SkillGroup) -> SkillDoc {
    let text = group_text(g);
    let commands: Vec<&CommandSpec> = agent_commands().filter(|c| c.group == g).collect();
    let name = g.skill_name();
    let mut s = format!(
        "---\nname: {name}\ndescription: {}\nwhen-to-use: {}\n---\n\n# {}\n\n",
        text.description, text.when_to_use, text.title
    );
    if !text.intro.is_empty() {
        s.push_str(text.intro);
        s.push_str("\n\n");
    }
    if g == SkillGroup::Transport {
        s.push_str(&transport_body());
    }
    if !commands.is_empty() {
        s.push_str("## Commands\n\n");
        for c in &commands {
            s.push_str(&command_section(c));
        }
    }
    let mut examples = example_lines(&commands);
    if g == SkillGroup::Transport {
        examples.push(format!("{EXAMPLE_PROGRAM} status --json"));
        examples.push(format!("{EXAMPLE_PROGRAM} --addr 127.0.0.1:{DEFAULT_PORT} status"));
    }
    if !examples.is_empty() {
        s.push_str("## Examples\n\n```sh\n");
        for e in &examples {
            s.push_str(e);
            s.push('\n');
        }
        s.push_str("```\n\n");
    }
    if g == SkillGroup::DataReference {
        s.push_str(metrics_markdown().replacen("# Metrics", "## Metrics", 1).trim_end());
        s.push_str("\n\n");
    }
    s.push_str("## Context budget\n\n");
    s.push_str(text.budget);
    s.push('\n');
    SkillDoc {
        path: PathBuf::from(&name).join("SKILL.md"),
        name,
        title: text.title.into(),
        description: text.description.into(),
        when_to_use: text.when_to_use.into(),
        text: s,
    }
}

/// The ten skill documents, in group order.
pub fn skill_docs() -> Vec<SkillDoc> {
    SkillGroup::ALL.iter().map(|g| render_doc(*g)).collect()
}

/// Writes every skill document plus the metric glossary into `dir`.
pub fn emit_skills(dir: &Path) -> Result<Vec<SkillDoc>, AgentError> {
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e| AgentError::Io(p, e)
    };
    let docs = skill_docs();
    for d in &docs {
        let path = dir.join(&d.path);
        let parent = path.parent().expect("doc path has a directory");
        std::fs::create_dir_all(parent).map_err(io(parent))?;
        std::fs::write(&path, &d.text).map_err(io(&path))?;
    }
    let metrics = dir.join(METRICS_FILE);
    std::fs::write(&metrics, metrics_markdown()).map_err(io(&metrics))?;
    Ok(docs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedArg {
    pub name: String,
    pub kind: String,
    pub required: bool,
    pub positional: bool,
    pub help: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedCommand {
    pub name: String,
    /// Skill name of the document that lists it.
    pub skill: String,
    pub summary: String,
    pub read_only: bool,
    pub connection: bool,
    pub args: Vec<ParsedArg>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedSkill {
    pub name: String,
    pub description: String,
    pub when_to_use: String,
    pub commands: Vec<ParsedCommand>,
    /// Example lines, program name included.
    pub examples: Vec<String>,
}

fn frontmatter(text: &str) -> Option<(Vec<(String, String)>, &str)> {
    let rest = text.strip_prefix("---\n")?;
    let end = rest.find("\n---\n")?;
    let fields = rest[..end]
        .lines()
        .filter_map(|l| l.split_once(':').map(|(k, v)| (k.trim().to_string(), v.trim().to_string())))
        .collect();
    Some((fields, &rest[end + 5..]))
}

/// Reads one skill document back into its command table.
pub fn parse_skill(text: &str) -> Result<ParsedSkill, AgentError> {
    let bad = |m: &str| AgentError::SkillDoc(m.to_string());
    let (fields, body) = frontmatter(text).ok_or_else(|| bad("missing frontmatter"))?;
    let get = |k: &str| fields.iter().find(|(n, _)| n == k).map(|(_, v)| v.clone()).ok_or_else(|| bad(&format!("missing {k}")));
    let name = get("name")?;
    let mut skill = ParsedSkill {
        description: get("description")?,
        when_to_use: get("when-to-use")?,
        name,
        commands: Vec::new(),
        examples: Vec::new(),
    };
    let mut section = "";
    let mut in_code = false;
    for line in body.lines() {
        if line.starts_with("```") {
            in_code = !in_code;
            continue;
        }
        if in_code {
            if section == "Examples" && line.starts_with(&format!("{EXAMPLE_PROGRAM} ")) {
                skill.examples.push(line.to_string());
            }
            continue;
        }
        if let Some(h) = line.strip_prefix("## ") {
            section = match h {
                "Commands" => "Commands",
                "Examples" => "Examples",
                _ => "",
            };
            continue;
        }
        if section != "Commands" {
            continue;
        }
        if let Some(cmd) = line.strip_prefix("### ") {
            skill.commands.push(ParsedCommand {
                name: cmd.trim().to_string(),
                skill: skill.name.clone(),
                summary: String::new(),
                read_only: false,
                connection: false,
                args: Vec::new(),
            });
            continue;
        }
        let Some(cur) = skill.commands.last_mut() else { continue };
        if let Some(v) = line.strip_prefix("- read-only: ") {
            cur.read_only = v == "yes";
        } else if line.starts_with("- connection: ") {
            cur.connection = true;
        } else if line.starts_with("| ") && !line.starts_with("| arg ") {
            let cells: Vec<String> = split_row(line);
            if cells.len() == 5 {
                cur.args.push(ParsedArg {
                    name: cells[0].clone(),
                    kind: cells[1].clone(),
                    required: cells[2] == "yes",
                    positional: cells[3] == "yes",
                    help: cells[4].clone(),
                });
            }
        } else if cur.summary.is_empty() && !line.is_empty() && !line.starts_with('-') && !line.starts_with('|') {
            cur.summary = line.to_string();
        }
    }
    Ok(skill)
}

fn split_row(line: &str) -> Vec<String> {
    let inner = line.trim().trim_start_matches('|').trim_end_matches('|');
    let mut cells = Vec::new();
    let mut cur = String::new();
    let mut chars = inner.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\\' if chars.peek() == Some(&'|') => {
                cur.push('|');
                chars.next();
            }
            '|' => cells.push(std::mem::take(&mut cur).trim().to_string()),
            c => cur.push(c),
        }
    }
    cells.push(cur.trim().to_string());
    cells
}

/// CLI options that apply to the client, not the command: `(flag, takes a value)`.
pub const GLOBAL_OPTIONS: [(&str, bool); 4] = [("--json", false), ("--addr", true), ("--tz", true), ("--http", false)];

/// Turns a documented example line into the command and JSON args it sends.
pub fn example_call(line: &str) -> Result<(&'static CommandSpec, Value), ApiError> {
    let words = split_words(line)?;
    let mut rest = Vec::new();
    let mut it = words.into_iter().skip(1);
    while let Some(w) = it.next() {
        match GLOBAL_OPTIONS.iter().find(|(f, _)| *f == w) {
            Some((_, true)) => {
                it.next();
            }
            Some((_, false)) => {}
            None => rest.push(w),
        }
    }
    let (name, args) = rest.split_first().ok_or_else(|| ApiError::bad_args("example has no command"))?;
    let spec = command(name).ok_or_else(|| ApiError::bad_args(format!("unknown command `{name}`")))?;
    Ok((spec, parse_cli_args(spec, args)?))
}

/// Reads every `*/SKILL.md` under `dir`, sorted by directory name.
pub fn parse_skills(dir: &Path) -> Result<Vec<ParsedSkill>, AgentError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| AgentError::Io(dir.to_path_buf(), e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path().join("SKILL.md"))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| AgentError::Io(p.clone(), e))?;
            parse_skill(&text)
        })
        .collect()
}
