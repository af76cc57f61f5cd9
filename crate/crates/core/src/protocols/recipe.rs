use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ProtocolError;

/// Highest recipe file version this build reads.
pub const RECIPE_FORMAT_VERSION: u32 = 1;

/// One phase of a round: announced first, then timed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub title: String,
    pub announce: String,
    /// Spoken while the phase runs; count markers are appended on expansion.
    pub cue: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolRecipe {
    #[serde(default = "default_version")]
    pub format_version: u32,
    /// Defaults to the slugged name.
    #[serde(default)]
    pub recipe_id: String,
    pub name: String,
    pub rounds: u32,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub description: String,
    pub phases: Vec<Phase>,
}

fn default_version() -> u32 {
    RECIPE_FORMAT_VERSION
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    Announce,
    Timed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    /// 1-based position in the expanded run.
    pub index: usize,
    pub kind: StepKind,
    pub title: String,
    pub text: String,
    /// Zero for announce steps.
    pub seconds: f64,
}

impl Step {
    /// Heading as shown in transcripts, e.g. `Inhale - 4s`.
    pub fn heading(&self) -> String {
        match self.kind {
            StepKind::Announce => self.title.clone(),
            StepKind::Timed => format!("{} - {}s", self.title, fmt_seconds(self.seconds)),
        }
    }
}

pub(crate) fn fmt_seconds(s: f64) -> String {
    if s.fract() == 0.0 && s.abs() < 1e15 {
        format!("{}", s as i64)
    } else {
        format!("{s}")
    }
}

/// `1..2..3..4` for a 4 s phase; empty below one second.
pub fn count_markers(seconds: f64) -> String {
    let n = seconds.floor().max(0.0) as usize;
    (1..=n).map(|i| i.to_string()).collect::<Vec<_>>().join("..")
}

pub fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            out.push(c);
        } else if !out.is_empty() && !out.ends_with('-') {
            out.push('-');
        }
    }
    while out.ends_with('-') {
        out.pop();
    }
    out
}

impl ProtocolRecipe {
    pub fn step_count(&self) -> usize {
        self.rounds as usize * self.phases.len() * 2
    }

    /// Sum of timed phase durations over all rounds.
    pub fn timed_seconds(&self) -> f64 {
        self.rounds as f64 * self.phases.iter().map(|p| p.seconds).sum::<f64>()
    }

    pub fn validate(mut self) -> Result<Self, ProtocolError> {
        let bad = |field: &str, message: String| ProtocolError::Parse { line: 0, field: field.to_string(), message };
        if self.format_version == 0 || self.format_version > RECIPE_FORMAT_VERSION {
            return Err(bad("format_version", format!("unsupported version {}", self.format_version)));
        }
        if self.name.trim().is_empty() {
            return Err(bad("name", "must not be empty".into()));
        }
        if self.rounds < 1 {
            return Err(bad("rounds", "must be at least 1".into()));
        }
        if self.phases.is_empty() {
            return Err(bad("phases", "at least one phase is required".into()));
        }
        for (i, p) in self.phases.iter().enumerate() {
            if !(p.seconds >= 0.0) || !p.seconds.is_finite() {
                return Err(bad(&format!("phases[{i}].seconds"), format!("{} is not a duration", p.seconds)));
            }
            if p.title.trim().is_empty() {
                return Err(bad(&format!("phases[{i}].title"), "must not be empty".into()));
            }
        }
        if self.recipe_id.trim().is_empty() {
            self.recipe_id = slug(&self.name);
        }
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self, ProtocolError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let recipe: ProtocolRecipe = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            ProtocolError::Parse { line: inner.line(), field, message: inner.to_string() }
        })?;
        recipe.validate().map_err(|e| match e {
            ProtocolError::Parse { line: 0, field, message } => {
                let line = line_of_key(text, field.split(['[', '.']).next().unwrap_or(&field));
                ProtocolError::Parse { line, field, message }
            }
            other => other,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProtocolError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ProtocolError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    /// Announce step then timed step for every phase of every round.
    pub fn expand(&self) -> Vec<Step> {
        let mut steps = Vec::with_capacity(self.step_count());
        for _ in 0..self.rounds {
            for p in &self.phases {
                let secs = fmt_seconds(p.seconds);
                steps.push(Step {
                    index: steps.len() + 1,
                    kind: StepKind::Announce,
                    title: format!("Coming up: {} {secs} counts", p.title),
                    text: p.announce.clone(),
                    seconds: 0.0,
                });
                let markers = count_markers(p.seconds);
                let text = match (p.cue.is_empty(), markers.is_empty()) {
                    (_, true) => p.cue.clone(),
                    (true, false) => markers,
                    (false, false) => format!("{} {markers}", p.cue),
                };
                steps.push(Step {
                    index: steps.len() + 1,
                    kind: StepKind::Timed,
                    title: p.title.clone(),
                    text,
                    seconds: p.seconds,
                });
            }
        }
        steps
    }
}

/// First line mentioning `"key"`, or 0 when absent.
fn line_of_key(text: &str, key: &str) -> usize {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map_or(0, |i| i + 1)
}

/// Recipes shipped with the engine.
pub fn bundled_recipes() -> Vec<ProtocolRecipe> {
    [
        include_str!("../../recipes/energizing-breath.json"),
        include_str!("../../recipes/box-breathing.json"),
    ]
    .iter()
    .map(|s| ProtocolRecipe::from_json(s).expect("bundled recipe is valid"))
    .collect()
}
