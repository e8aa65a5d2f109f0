//! The four agent roles as prompt-driven information processors.
//!
//! Each role renders its template, asks a [`Backend`] for a completion and
//! validates the reply against the role's JSON schema. Invalid replies get a
//! repair message quoting the violation, up to `max_repairs` times.

mod backend;
mod heuristic;
mod parse;
pub mod prompt;

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::twin::{FunctionCall, FunctionRegistry, SimulationSnapshot};

pub use backend::{
    complete, Backend, BackendError, ChatMessage, ChatRole, GenerationParams, RemoteBackend, RemoteConfig,
    ScriptedBackend, API_KEY_ENV,
};
pub use heuristic::HeuristicBackend;
pub use parse::{extract_json, parse_and_validate, OutputSchema, SchemaError};
pub use prompt::{render_template, Bindings, PromptError};

pub const DEFAULT_MAX_REPAIRS: u32 = 2;
/// Number of past cycles the reasoning agent sees.
pub const HISTORY_LIMIT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Observation,
    Reasoning,
    Decision,
    Summarization,
}

impl AgentRole {
    pub const ALL: [AgentRole; 4] = [
        AgentRole::Observation,
        AgentRole::Reasoning,
        AgentRole::Decision,
        AgentRole::Summarization,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Observation => "observation",
            AgentRole::Reasoning => "reasoning",
            AgentRole::Decision => "decision",
            AgentRole::Summarization => "summarization",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub key_observations: Vec<String>,
    pub metric_value: f64,
    pub notable_patterns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reasoning {
    pub analysis: String,
    pub candidate_strategies: Vec<String>,
    pub recommended: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub call: FunctionCall,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub action: String,
    pub call: FunctionCall,
}

/// Ordered, parametrized summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPlan {
    pub steps: Vec<PlanStep>,
    pub final_metric: f64,
    pub narrative: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentOutput {
    Observation(Observation),
    Reasoning(Reasoning),
    Decision(Decision),
    Summary(ControlPlan),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSettings {
    pub params: GenerationParams,
    pub max_repairs: u32,
}

impl Default for AgentSettings {
    fn default() -> Self {
        Self {
            params: GenerationParams::default(),
            max_repairs: DEFAULT_MAX_REPAIRS,
        }
    }
}

/// A validated output together with every raw reply that led to it.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentRun<T> {
    pub output: T,
    pub raw_texts: Vec<String>,
}

impl<T> AgentRun<T> {
    pub fn backend_calls(&self) -> usize {
        self.raw_texts.len()
    }

    fn map<U>(self, f: impl FnOnce(T) -> U) -> AgentRun<U> {
        AgentRun {
            output: f(self.output),
            raw_texts: self.raw_texts,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AgentError {
    #[error("prompt rendering failed: {0}")]
    Prompt(#[from] PromptError),
    #[error("{role} agent backend error: {source}")]
    Backend {
        role: AgentRole,
        source: BackendError,
        raw_texts: Vec<String>,
    },
    #[error("{role} agent failed after {attempts} attempts: {last_error}")]
    Failure {
        role: AgentRole,
        attempts: u32,
        last_error: String,
        raw_texts: Vec<String>,
    },
}

impl AgentError {
    pub fn raw_texts(&self) -> &[String] {
        match self {
            AgentError::Prompt(_) => &[],
            AgentError::Backend { raw_texts, .. } | AgentError::Failure { raw_texts, .. } => raw_texts,
        }
    }
}

fn repair_message(error: &SchemaError) -> String {
    format!(
        "Your previous reply was rejected: {error}. Reply again with only a JSON object that satisfies the required format."
    )
}

/// Renders the role's prompt, queries the backend and validates the reply,
/// retrying with a repair message on schema violations. Issues at most
/// `1 + max_repairs` backend calls.
pub fn run_agent(
    role: AgentRole,
    backend: &dyn Backend,
    bindings: &Bindings,
    schema: OutputSchema<'_>,
    settings: &AgentSettings,
) -> Result<AgentRun<AgentOutput>, AgentError> {
    let (system, user_template) = prompt::templates(role);
    let user = render_template(user_template, bindings)?;
    let mut messages = vec![ChatMessage::system(system), ChatMessage::user(user)];
    let mut raw_texts = Vec::new();
    for attempt in 0..=settings.max_repairs {
        let text = match complete(backend, &messages, &settings.params) {
            Ok(text) => text,
            Err(source) => {
                return Err(AgentError::Backend {
                    role,
                    source,
                    raw_texts,
                })
            }
        };
        raw_texts.push(text.clone());
        match parse_and_validate(&text, schema) {
            Ok(output) => return Ok(AgentRun { output, raw_texts }),
            Err(err) if attempt == settings.max_repairs => {
                return Err(AgentError::Failure {
                    role,
                    attempts: attempt + 1,
                    last_error: err.0,
                    raw_texts,
                })
            }
            Err(err) => {
                messages.push(ChatMessage::assistant(text));
                messages.push(ChatMessage::user(repair_message(&err)));
            }
        }
    }
    unreachable!("loop returns on the final attempt")
}

/// What one cycle's agents know about the run.
#[derive(Debug, Clone, Copy)]
pub struct CycleContext<'a> {
    pub goal: &'a str,
    pub threshold: f64,
    pub snapshot: &'a SimulationSnapshot,
    pub max_cycles: u32,
    /// Error text from the previous cycle's execution, if it failed.
    pub feedback: Option<&'a str>,
    /// One line per finished run of this exploration.
    pub previous_runs: &'a str,
}

impl CycleContext<'_> {
    pub fn remaining_cycles(&self) -> u32 {
        self.max_cycles.saturating_sub(self.snapshot.cycle_index + 1)
    }

    fn common_bindings(&self) -> Bindings {
        let s = self.snapshot;
        let mut b = Bindings::new();
        b.insert("goal", self.goal.to_string());
        b.insert("run_index", s.run_index.to_string());
        b.insert("cycle_index", s.cycle_index.to_string());
        b.insert("shakes", s.shakes_so_far.to_string());
        b.insert("capacity", s.capacity().to_string());
        b.insert("free_cells", s.free_cells.to_string());
        b.insert("light", s.counts.light.to_string());
        b.insert("normal", s.counts.normal.to_string());
        b.insert("heavy", s.counts.heavy.to_string());
        b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub cycle_index: u32,
    pub call: FunctionCall,
    /// `ok` or `error: <message>`.
    pub outcome: String,
    pub metric: f64,
}

/// Bounded window of recent (decision, metric) pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    entries: VecDeque<HistoryEntry>,
}

impl History {
    pub fn push(&mut self, entry: HistoryEntry) {
        if self.entries.len() == HISTORY_LIMIT {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
    }

    pub fn entries(&self) -> impl Iterator<Item = &HistoryEntry> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn render(&self) -> String {
        if self.entries.is_empty() {
            return "none".into();
        }
        self.entries
            .iter()
            .map(|e| format!("- cycle {}: {} -> {}, metric {}", e.cycle_index, e.call, e.outcome, e.metric))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

pub fn observe(
    ctx: &CycleContext<'_>,
    backend: &dyn Backend,
    settings: &AgentSettings,
) -> Result<AgentRun<Observation>, AgentError> {
    let s = ctx.snapshot;
    let mut b = ctx.common_bindings();
    b.insert("rows", s.rows.to_string());
    b.insert("cols", s.cols.to_string());
    b.insert("grid_text", s.grid_text.clone());
    b.insert("metric_raw", s.metric.raw.to_string());
    b.insert("metric_normalized", format!("{:.3}", s.metric.normalized));
    b.insert("feedback", ctx.feedback.unwrap_or("none").to_string());
    let run = run_agent(AgentRole::Observation, backend, &b, OutputSchema::Observation, settings)?;
    Ok(run.map(|out| match out {
        // the metric is passed through from the twin, never re-estimated
        AgentOutput::Observation(mut o) => {
            o.metric_value = s.metric.raw;
            o
        }
        other => unreachable!("observation schema produced {other:?}"),
    }))
}

pub fn reason(
    ctx: &CycleContext<'_>,
    observation: &Observation,
    history: &History,
    backend: &dyn Backend,
    settings: &AgentSettings,
) -> Result<AgentRun<Reasoning>, AgentError> {
    let mut b = ctx.common_bindings();
    b.insert("threshold", ctx.threshold.to_string());
    b.insert("max_cycles", ctx.max_cycles.to_string());
    b.insert("remaining_cycles", ctx.remaining_cycles().to_string());
    b.insert(
        "observation_json",
        serde_json::to_string(observation).expect("observation serializes"),
    );
    b.insert("history", history.render());
    b.insert(
        "previous_runs",
        if ctx.previous_runs.is_empty() {
            "none".to_string()
        } else {
            ctx.previous_runs.to_string()
        },
    );
    let run = run_agent(AgentRole::Reasoning, backend, &b, OutputSchema::Reasoning, settings)?;
    Ok(run.map(|out| match out {
        AgentOutput::Reasoning(r) => r,
        other => unreachable!("reasoning schema produced {other:?}"),
    }))
}

pub fn decide(
    ctx: &CycleContext<'_>,
    reasoning: &Reasoning,
    registry: &FunctionRegistry,
    backend: &dyn Backend,
    settings: &AgentSettings,
) -> Result<AgentRun<Decision>, AgentError> {
    let mut b = ctx.common_bindings();
    b.insert(
        "reasoning_json",
        serde_json::to_string(reasoning).expect("reasoning serializes"),
    );
    b.insert("functions", registry.render());
    b.insert("remaining_cycles", ctx.remaining_cycles().to_string());
    let run = run_agent(AgentRole::Decision, backend, &b, OutputSchema::Decision(registry), settings)?;
    Ok(run.map(|out| match out {
        AgentOutput::Decision(d) => d,
        other => unreachable!("decision schema produced {other:?}"),
    }))
}

/// Everything the summarization agent needs about one finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDigest {
    pub goal: String,
    pub run_index: u32,
    pub status: String,
    pub final_metric: f64,
    pub total_shakes: u32,
    pub executed_calls: Vec<FunctionCall>,
}

pub fn summarize(
    digest: &RunDigest,
    registry: &FunctionRegistry,
    backend: &dyn Backend,
    settings: &AgentSettings,
) -> Result<AgentRun<ControlPlan>, AgentError> {
    let mut b = Bindings::new();
    b.insert("goal", digest.goal.clone());
    b.insert("run_index", digest.run_index.to_string());
    b.insert("status", digest.status.clone());
    b.insert("final_metric", digest.final_metric.to_string());
    b.insert("total_shakes", digest.total_shakes.to_string());
    b.insert(
        "executed_calls",
        if digest.executed_calls.is_empty() {
            "none".into()
        } else {
            digest
                .executed_calls
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join("\n")
        },
    );
    let schema = OutputSchema::Summary {
        expected_calls: &digest.executed_calls,
        registry,
    };
    let run = run_agent(AgentRole::Summarization, backend, &b, schema, settings)?;
    Ok(run.map(|out| match out {
        AgentOutput::Summary(mut plan) => {
            plan.final_metric = digest.final_metric;
            plan
        }
        other => unreachable!("summary schema produced {other:?}"),
    }))
}
