//! The `skill` command line: local helpers plus every API command.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono_tz::Tz;
use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use skill_core::agent::{emit_skills, execute_plan, plan, AgentSnapshot, RuleTable, Transcript};
use skill_core::api::{command, parse_cli_args, ApiError, COMMANDS};
use skill_core::protocols::now_unix;
use skill_core::render::{render, render_event, RenderOptions};

use crate::client::{BlockingClient, ClientError, ConnectOptions};

/// Stable exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const UNREACHABLE: i32 = 2;
    pub const DAEMON_ERROR: i32 = 3;
    pub const USAGE: i32 = 4;
}

#[derive(Debug, Parser)]
#[command(name = "skill", version, about = "Query and steer the local skill daemon")]
struct Cli {
    /// Daemon address (host:port); skips mDNS discovery.
    #[arg(long, env = "SKILL_ADDR", global = true)]
    addr: Option<String>,
    /// Print the response data as JSON.
    #[arg(long, global = true)]
    json: bool,
    /// Use HTTP instead of WebSocket (read-only commands only).
    #[arg(long, global = true)]
    http: bool,
    /// IANA zone for rendered timestamps; defaults to SKILL_TZ, then TZ, then UTC.
    #[arg(long, global = true)]
    tz: Option<String>,
    /// File holding the owner token (needed for delete).
    #[arg(long, global = true)]
    owner_token_file: Option<PathBuf>,
    /// Seconds to browse for the daemon.
    #[arg(long, global = true, default_value_t = 3.0)]
    discovery_timeout: f64,
    #[command(subcommand)]
    command: Local,
}

#[derive(Debug, Subcommand)]
enum Local {
    /// Write the skill documents into DIR.
    EmitSkills { dir: PathBuf },
    /// Run one check-in through the rule-based loop.
    Loop {
        /// What the user said.
        #[arg(required = true)]
        utterance: Vec<String>,
        /// Rule table (TOML); defaults to the built-in one.
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Time the check-in happens at (unix seconds).
        #[arg(long)]
        at: Option<f64>,
    },
    /// Render saved `--json` output of CMD read from FILE or stdin.
    Render { cmd: String, file: Option<PathBuf> },
    /// List the daemon commands.
    Commands,
    #[command(external_subcommand)]
    Api(Vec<String>),
}

struct Settings {
    connect: ConnectOptions,
    json: bool,
    render: RenderOptions,
}

fn parse_tz(name: &str) -> Result<Tz, String> {
    name.parse().map_err(|_| format!("unknown time zone `{name}`"))
}

fn default_tz() -> Tz {
    ["SKILL_TZ", "TZ"]
        .iter()
        .filter_map(|k| std::env::var(k).ok())
        .find_map(|v| v.trim_start_matches(':').parse().ok())
        .unwrap_or(chrono_tz::UTC)
}

/// Pulls global options that follow an API command name out of its words.
fn strip_globals(words: Vec<String>, cli: &mut Cli) -> Result<Vec<String>, String> {
    let mut rest = Vec::new();
    let mut it = words.into_iter();
    while let Some(w) = it.next() {
        let (name, inline) = match w.split_once('=') {
            Some((n, v)) if n.starts_with("--") => (n.to_string(), Some(v.to_string())),
            _ => (w.clone(), None),
        };
        let mut value = |flag: &str| inline.clone().or_else(|| it.next()).ok_or(format!("{flag} needs a value"));
        match name.as_str() {
            "--json" => cli.json = true,
            "--http" => cli.http = true,
            "--addr" => cli.addr = Some(value("--addr")?),
            "--tz" => cli.tz = Some(value("--tz")?),
            "--owner-token-file" => cli.owner_token_file = Some(value("--owner-token-file")?.into()),
            "--discovery-timeout" => {
                let v = value("--discovery-timeout")?;
                cli.discovery_timeout = v.parse().map_err(|_| format!("--discovery-timeout: `{v}` is not a number"))?;
            }
            _ => rest.push(w),
        }
    }
    Ok(rest)
}

fn program_name(argv0: Option<&OsString>) -> String {
    argv0
        .and_then(|a| Path::new(a).file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "skill".into())
}

/// Runs the CLI and returns the exit code.
pub fn run(args: Vec<OsString>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let program = program_name(args.first());
    let mut cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind::*;
            let code = match e.kind() {
                DisplayHelp | DisplayVersion | DisplayHelpOnMissingArgumentOrSubcommand => exit::OK,
                _ => exit::USAGE,
            };
            let text = e.render().to_string();
            let _ = if code == exit::OK { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let command = std::mem::replace(&mut cli.command, Local::Commands);
    let command = match command {
        Local::Api(words) => match strip_globals(words, &mut cli) {
            Ok(w) => Local::Api(w),
            Err(e) => return usage(err, &e),
        },
        other => other,
    };
    let tz = match cli.tz.as_deref().map(parse_tz).transpose() {
        Ok(tz) => tz.unwrap_or_else(default_tz),
        Err(e) => return usage(err, &e),
    };
    let owner_token = match &cli.owner_token_file {
        Some(p) => match std::fs::read_to_string(p) {
            Ok(t) => Some(t.trim().to_string()),
            Err(e) => return usage(err, &format!("{}: {e}", p.display())),
        },
        None => None,
    };
    if !(cli.discovery_timeout > 0.0) {
        return usage(err, "--discovery-timeout must be positive");
    }
    let settings = Settings {
        connect: ConnectOptions {
            addr: cli.addr.clone(),
            force_http: cli.http,
            owner_token,
            discovery_timeout: Some(Duration::from_secs_f64(cli.discovery_timeout)),
        },
        json: cli.json,
        render: RenderOptions { tz, program },
    };
    match command {
        Local::Commands => {
            for c in COMMANDS {
                let _ = writeln!(out, "{:<20} {}", c.name, c.summary);
            }
            exit::OK
        }
        Local::EmitSkills { dir } => match emit_skills(&dir) {
            Ok(docs) => {
                for d in docs {
                    let _ = writeln!(out, "{}", d.path.display());
                }
                exit::OK
            }
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                exit::DAEMON_ERROR
            }
        },
        Local::Render { cmd, file } => render_saved(&cmd, file.as_deref(), &settings, out, err),
        Local::Loop { utterance, rules, at } => run_loop(&utterance.join(" "), rules.as_deref(), at, &settings, out, err),
        Local::Api(words) => run_api(words, &settings, out, err),
    }
}

fn usage(err: &mut dyn Write, msg: &str) -> i32 {
    let _ = writeln!(err, "error: {msg}");
    exit::USAGE
}

fn client_failure(err: &mut dyn Write, e: &ClientError) -> i32 {
    let _ = writeln!(err, "error: {e}");
    match e {
        ClientError::Unreachable(_) | ClientError::Transport(_) => exit::UNREACHABLE,
        ClientError::Api(_) => exit::DAEMON_ERROR,
    }
}

fn connect(s: &Settings, out: &mut dyn Write) -> Result<BlockingClient, ClientError> {
    let json = s.json;
    BlockingClient::connect(&s.connect, &mut |line: &str| {
        if !json {
            let _ = writeln!(out, "{line}");
            let _ = out.flush();
        }
    })
}

fn print_data(cmd: &str, data: &Value, s: &Settings, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    if s.json {
        let _ = writeln!(out, "{}", serde_json::to_string_pretty(data).expect("json"));
        return exit::OK;
    }
    match render(cmd, data, &s.render) {
        Ok(text) => {
            let _ = write!(out, "{text}");
            exit::OK
        }
        Err(e) => {
            let _ = writeln!(err, "error: cannot render {cmd}: {e}");
            exit::DAEMON_ERROR
        }
    }
}

fn run_api(words: Vec<String>, s: &Settings, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let Some((name, rest)) = words.split_first() else { return usage(err, "missing command") };
    let Some(spec) = command(name) else {
        return usage(err, &format!("unknown command `{name}`; see `skill commands`"));
    };
    let args = match parse_cli_args(spec, rest) {
        Ok(a) => a,
        Err(e) => return usage(err, &e.message),
    };
    if name == "stream-subscribe" {
        return stream(args, s, out, err);
    }
    let client = match connect(s, out) {
        Ok(c) => c,
        Err(e) => return client_failure(err, &e),
    };
    let code = match client.call(name, &args) {
        Ok(data) => print_data(name, &data, s, out, err),
        Err(e) => client_failure(err, &e),
    };
    client.close();
    code
}

fn stream(mut args: Value, s: &Settings, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let seconds = args.as_object_mut().and_then(|m| m.remove("seconds")).and_then(|v| v.as_f64());
    let client = match connect(s, out) {
        Ok(c) => c,
        Err(e) => return client_failure(err, &e),
    };
    let data = match client.call("stream-subscribe", &args) {
        Ok(d) => d,
        Err(e) => return client_failure(err, &e),
    };
    if s.json {
        let _ = writeln!(out, "{data}");
    } else {
        let kinds: Vec<&str> = data["subscribed"].as_array().into_iter().flatten().filter_map(Value::as_str).collect();
        let _ = writeln!(out, "$ stream-subscribe\nsubscribed: {}", kinds.join(", "));
    }
    let deadline = seconds.map(|x| Instant::now() + Duration::from_secs_f64(x.max(0.0)));
    loop {
        let wait = match deadline {
            Some(d) => match d.checked_duration_since(Instant::now()) {
                Some(left) => left,
                None => break,
            },
            None => Duration::from_secs(3600),
        };
        match client.next_event(wait) {
            Ok(Some(ev)) => {
                let line = if s.json { serde_json::to_string(&ev).expect("json") } else { render_event(&ev, s.render.tz) };
                let _ = writeln!(out, "{line}");
                let _ = out.flush();
            }
            Ok(None) => {}
            Err(e) => return client_failure(err, &e),
        }
    }
    let _ = client.call("stream-unsubscribe", &json!({}));
    client.close();
    exit::OK
}

fn render_saved(cmd: &str, file: Option<&Path>, s: &Settings, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let text = match file {
        Some(p) => std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display())),
        None => std::io::read_to_string(std::io::stdin()).map_err(|e| e.to_string()),
    };
    let data: Value = match text.and_then(|t| serde_json::from_str(&t).map_err(|e| e.to_string())) {
        Ok(v) => v,
        Err(e) => return usage(err, &e),
    };
    let s = Settings { json: false, connect: s.connect.clone(), render: s.render.clone() };
    print_data(cmd, &data, &s, out, err)
}

fn run_loop(
    utterance: &str,
    rules: Option<&Path>,
    at: Option<f64>,
    s: &Settings,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let rules = match rules.map(RuleTable::load).transpose() {
        Ok(r) => r.unwrap_or_default(),
        Err(e) => return usage(err, &e.to_string()),
    };
    let client = match connect(s, out) {
        Ok(c) => c,
        Err(e) => return client_failure(err, &e),
    };
    let snapshot = match AgentSnapshot::fetch(&client, at.unwrap_or_else(now_unix)) {
        Ok(snap) => snap,
        Err(e) => return client_failure(err, &ClientError::Api(ApiError::from_body(&e))),
    };
    let transcript = execute_plan(&plan(&rules, utterance, &snapshot), &client);
    client.close();
    if s.json {
        let _ = writeln!(out, "{}", serde_json::to_string_pretty(&transcript).expect("json"));
    } else {
        let _ = write!(out, "{}", render_transcript(&transcript));
    }
    if transcript.completed {
        exit::OK
    } else {
        exit::DAEMON_ERROR
    }
}

/// Human form of a check-in: the calls made, then the reply.
pub fn render_transcript(t: &Transcript) -> String {
    let mut s = format!("$ loop \"{}\"\n", t.plan.utterance);
    match &t.plan.trigger.word {
        Some(w) => s.push_str(&format!("rule: {} (\"{w}\")\n", t.plan.trigger.rule)),
        None => s.push_str(&format!("rule: {}\n", t.plan.trigger.rule)),
    }
    for c in &t.calls {
        let status = match &c.error {
            None => "ok".to_string(),
            Some(e) => format!("{}: {}", e.code, e.message),
        };
        s.push_str(&format!("-> {} {} [{status}]\n", c.cmd, c.args));
    }
    s.push('\n');
    s.push_str(&t.response);
    s.push('\n');
    s
}
