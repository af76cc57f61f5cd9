//! Skill documents for agent harnesses and a rule-based check-in loop that
//! drives the command API without a language model.

mod policy;
mod skills;

use std::path::PathBuf;

use serde_json::Value;
use thiserror::Error;

pub use policy::{
    execute_plan, fill, plan, replay, tokens, AgentSnapshot, CallRecord, CallTemplate, LoopPlan, PlanTemplate,
    ProtocolSuggestion, RecipeInfo, Rule, RuleTable, ToolCall, Transcript, Trigger,
};
pub use skills::{
    emit_skills, example_call, parse_skill, parse_skills, skill_docs, ParsedArg, ParsedCommand, ParsedSkill, SkillDoc,
    EXAMPLE_PROGRAM, GLOBAL_OPTIONS, MAX_DOC_WORDS, METRICS_FILE,
};

use crate::api::{Api, ApiError, CallContext};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("rule table: {0}")]
    Rules(String),
    #[error("rule `{rule}` calls `{cmd}`, which agents may not use")]
    Undocumented { rule: String, cmd: String },
    #[error("rule `{rule}` passes unknown argument `{arg}` to `{cmd}`")]
    UnknownArg { rule: String, cmd: String, arg: String },
    #[error("skill document: {0}")]
    SkillDoc(String),
}

/// Something that answers commands: the in-process API or a network client.
pub trait Endpoint {
    fn call(&self, cmd: &str, args: &Value) -> Result<Value, ApiError>;
}

impl Endpoint for Api {
    fn call(&self, cmd: &str, args: &Value) -> Result<Value, ApiError> {
        self.dispatch(cmd, args, &CallContext::default())
    }
}
