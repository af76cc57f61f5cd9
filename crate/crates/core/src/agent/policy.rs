use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{AgentError, Endpoint};
use crate::api::{command, ErrorBody};
use crate::render::fmt_duration;

const DEFAULT_RULES: &str = include_str!("../../agent/rules.toml");

/// One tool call in a rule, with placeholder arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CallTemplate {
    pub cmd: String,
    #[serde(default)]
    pub args: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanTemplate {
    pub calls: Vec<CallTemplate>,
    pub response: String,
    pub failure: String,
    #[serde(default)]
    pub failure_by_code: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub name: String,
    #[serde(default)]
    pub words: Vec<String>,
    /// Recipe tag → trigger words. A rule with intents suggests a protocol.
    #[serde(default)]
    pub intents: BTreeMap<String, Vec<String>>,
    /// Tag used when only a plain `words` entry matched.
    #[serde(default)]
    pub default_intent: Option<String>,
    #[serde(flatten)]
    pub plan: PlanTemplate,
}

impl Rule {
    fn suggests_protocol(&self) -> bool {
        !self.intents.is_empty() || self.default_intent.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleTable {
    #[serde(default = "yes")]
    pub require_confirm: bool,
    #[serde(default = "five")]
    pub recent_labels: u64,
    pub default: PlanTemplate,
    #[serde(default)]
    pub rules: Vec<Rule>,
}

fn yes() -> bool {
    true
}

fn five() -> u64 {
    5
}

impl Default for RuleTable {
    fn default() -> Self {
        Self::from_toml(DEFAULT_RULES).expect("bundled rule table is valid")
    }
}

impl RuleTable {
    /// The checked-in default table, as text.
    pub fn default_source() -> &'static str {
        DEFAULT_RULES
    }

    pub fn from_toml(text: &str) -> Result<Self, AgentError> {
        let table: RuleTable = toml::from_str(text).map_err(|e| AgentError::Rules(e.to_string()))?;
        table.validate()?;
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, AgentError> {
        let text = std::fs::read_to_string(path).map_err(|e| AgentError::Io(path.to_path_buf(), e))?;
        Self::from_toml(&text)
    }

    /// Every call must name a documented command and only its documented arguments.
    pub fn validate(&self) -> Result<(), AgentError> {
        let templates = std::iter::once(("default", &self.default)).chain(self.rules.iter().map(|r| (r.name.as_str(), &r.plan)));
        for (rule, plan) in templates {
            for call in &plan.calls {
                let spec = command(&call.cmd)
                    .filter(|c| !c.owner_only && !c.connection)
                    .ok_or_else(|| AgentError::Undocumented { rule: rule.into(), cmd: call.cmd.clone() })?;
                for key in call.args.keys() {
                    if !spec.args.iter().any(|a| a.name == key) {
                        return Err(AgentError::UnknownArg { rule: rule.into(), cmd: call.cmd.clone(), arg: key.clone() });
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeInfo {
    pub recipe_id: String,
    pub name: String,
    pub tags: Vec<String>,
}

/// What the planner may look at besides the utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    /// Time the utterance refers to, unix seconds.
    pub t: f64,
    pub recipes: Vec<RecipeInfo>,
}

impl AgentSnapshot {
    /// Reads the installed recipes through `endpoint`.
    pub fn fetch(endpoint: &dyn Endpoint, t: f64) -> Result<Self, ErrorBody> {
        let data = endpoint.call("recipes-list", &Value::Object(Map::new())).map_err(|e| e.body())?;
        let recipes = serde_json::from_value(data["recipes"].clone())
            .map_err(|e| ErrorBody { code: "internal".into(), message: e.to_string() })?;
        Ok(Self { t, recipes })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub cmd: String,
    pub args: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSuggestion {
    pub recipe_id: String,
    pub name: String,
    pub require_confirm: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trigger {
    /// Rule name, or "default".
    pub rule: String,
    pub word: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopPlan {
    pub utterance: String,
    pub trigger: Trigger,
    pub calls: Vec<ToolCall>,
    pub response: String,
    pub failure: String,
    #[serde(default)]
    pub failure_by_code: BTreeMap<String, String>,
    pub protocol: Option<ProtocolSuggestion>,
    /// Values available to the response templates.
    pub vars: BTreeMap<String, Value>,
}

/// Lowercased word tokens; apostrophes stay inside words.
pub fn tokens(utterance: &str) -> Vec<String> {
    utterance
        .to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|w| w.trim_matches('\'').to_string())
        .filter(|w| !w.is_empty())
        .collect()
}

fn contains_phrase(tokens: &[String], phrase: &[String]) -> bool {
    !phrase.is_empty() && tokens.windows(phrase.len()).any(|w| w == phrase)
}

fn pick_recipe<'a>(rule: &Rule, toks: &[String], snap: &'a AgentSnapshot) -> Option<(&'a RecipeInfo, Option<String>)> {
    if let Some(r) = snap.recipes.iter().find(|r| contains_phrase(toks, &tokens(&r.name))) {
        return Some((r, None));
    }
    let (tag, word) = rule
        .intents
        .iter()
        .find_map(|(tag, words)| toks.iter().find(|t| words.contains(t)).map(|w| (tag.clone(), Some(w.clone()))))
        .or_else(|| {
            let w = toks.iter().find(|t| rule.words.contains(t))?;
            Some((rule.default_intent.clone()?, Some(w.clone())))
        })?;
    snap.recipes.iter().find(|r| r.tags.contains(&tag)).map(|r| (r, word))
}

fn substitute(value: &Value, vars: &BTreeMap<String, Value>) -> Value {
    match value {
        Value::String(s) => {
            if let Some(v) = s.strip_prefix('{').and_then(|x| x.strip_suffix('}')).and_then(|k| vars.get(k)) {
                return v.clone();
            }
            let mut out = s.clone();
            for (k, v) in vars {
                let text = match v {
                    Value::String(x) => x.clone(),
                    other => other.to_string(),
                };
                out = out.replace(&format!("{{{k}}}"), &text);
            }
            Value::String(out)
        }
        Value::Array(items) => Value::Array(items.iter().map(|v| substitute(v, vars)).collect()),
        Value::Object(map) => Value::Object(map.iter().map(|(k, v)| (k.clone(), substitute(v, vars))).collect()),
        other => other.clone(),
    }
}

fn number(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
}

/// Chooses tool calls for an utterance. Pure: the same inputs give the same plan.
pub fn plan(rules: &RuleTable, utterance: &str, snapshot: &AgentSnapshot) -> LoopPlan {
    let toks = tokens(utterance);
    let mut vars = BTreeMap::from([
        ("t".to_string(), number(snapshot.t)),
        ("recent_labels".to_string(), Value::from(rules.recent_labels)),
        ("require_confirm".to_string(), Value::Bool(rules.require_confirm)),
    ]);
    let mut chosen = None;
    for rule in &rules.rules {
        if rule.suggests_protocol() {
            if let Some((recipe, word)) = pick_recipe(rule, &toks, snapshot) {
                vars.insert("recipe".into(), Value::String(recipe.recipe_id.clone()));
                vars.insert("recipe_name".into(), Value::String(recipe.name.clone()));
                let suggestion = ProtocolSuggestion {
                    recipe_id: recipe.recipe_id.clone(),
                    name: recipe.name.clone(),
                    require_confirm: rules.require_confirm,
                };
                chosen = Some((rule.name.clone(), word, &rule.plan, Some(suggestion)));
                break;
            }
        } else if let Some(w) = toks.iter().find(|t| rule.words.contains(t)) {
            chosen = Some((rule.name.clone(), Some(w.clone()), &rule.plan, None));
            break;
        }
    }
    let (rule, word, template, protocol) = chosen.unwrap_or(("default".into(), None, &rules.default, None));
    if let Some(w) = &word {
        vars.insert("word".into(), Value::String(w.clone()));
    }
    let calls = template
        .calls
        .iter()
        .map(|c| ToolCall { cmd: c.cmd.clone(), args: substitute(&Value::Object(c.args.clone()), &vars) })
        .collect();
    LoopPlan {
        utterance: utterance.to_string(),
        trigger: Trigger { rule, word },
        calls,
        response: template.response.clone(),
        failure: template.failure.clone(),
        failure_by_code: template.failure_by_code.clone(),
        protocol,
        vars,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub cmd: String,
    pub args: Value,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub plan: LoopPlan,
    pub calls: Vec<CallRecord>,
    /// False when a call failed and the plan stopped.
    pub completed: bool,
    pub response: String,
}

fn lookup<'a>(v: &'a Value, path: &[&str]) -> Option<&'a Value> {
    path.iter().try_fold(v, |cur, key| match cur {
        Value::Object(m) => m.get(*key),
        Value::Array(a) => key.parse::<usize>().ok().and_then(|i| a.get(i)),
        _ => None,
    })
}

fn show(v: &Value, filter: Option<&str>) -> String {
    match (v, filter) {
        (Value::Number(n), Some("duration")) => fmt_duration(n.as_f64().unwrap_or(0.0)),
        (Value::Number(n), _) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i.to_string(),
            (None, Some(x)) if x.fract() == 0.0 => format!("{x:.0}"),
            (None, Some(x)) => format!("{x:.2}"),
            _ => n.to_string(),
        },
        (Value::String(s), _) => s.clone(),
        (Value::Null, _) => "n/a".into(),
        (other, _) => other.to_string(),
    }
}

/// Fills `{name}` and `{cmd.path|filter}` placeholders.
pub fn fill(template: &str, vars: &BTreeMap<String, Value>, results: &BTreeMap<String, Value>) -> String {
    let mut out = String::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let Some(close) = rest[open..].find('}') else {
            out.push_str(&rest[open..]);
            return out;
        };
        let inner = &rest[open + 1..open + close];
        let (key, filter) = match inner.split_once('|') {
            Some((k, f)) => (k, Some(f)),
            None => (inner, None),
        };
        let value = vars.get(key).cloned().or_else(|| {
            let mut parts = key.split('.');
            let head = parts.next()?;
            let path: Vec<&str> = parts.collect();
            results.get(head).and_then(|r| lookup(r, &path)).cloned()
        });
        out.push_str(&value.map(|v| show(&v, filter)).unwrap_or_else(|| "n/a".into()));
        rest = &rest[open + close + 1..];
    }
    out.push_str(rest);
    out
}

/// Runs the calls in order; the first failure stops the plan.
pub fn execute_plan(plan: &LoopPlan, endpoint: &dyn Endpoint) -> Transcript {
    let mut records = Vec::new();
    let mut results = BTreeMap::new();
    let mut vars = plan.vars.clone();
    let mut failed: Option<ErrorBody> = None;
    for call in &plan.calls {
        match endpoint.call(&call.cmd, &call.args) {
            Ok(data) => {
                results.insert(call.cmd.clone(), data.clone());
                records.push(CallRecord { cmd: call.cmd.clone(), args: call.args.clone(), ok: true, data: Some(data), error: None });
            }
            Err(e) => {
                let body = e.body();
                vars.insert("failed_cmd".into(), Value::String(call.cmd.clone()));
                vars.insert("error".into(), Value::String(body.message.clone()));
                vars.insert("error_code".into(), Value::String(body.code.clone()));
                records.push(CallRecord { cmd: call.cmd.clone(), args: call.args.clone(), ok: false, data: None, error: Some(body.clone()) });
                failed = Some(body);
                break;
            }
        }
    }
    let template = match &failed {
        None => &plan.response,
        Some(e) => plan.failure_by_code.get(&e.code).unwrap_or(&plan.failure),
    };
    Transcript {
        plan: plan.clone(),
        calls: records,
        completed: failed.is_none(),
        response: fill(template, &vars, &results),
    }
}

/// Runs the transcript's plan again.
pub fn replay(transcript: &Transcript, endpoint: &dyn Endpoint) -> Transcript {
    execute_plan(&transcript.plan, endpoint)
}
