use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::{ConfigError, SessionConfig};
use super::control::SessionControl;
use super::events::{EventLog, EventSink, Stage};
use super::{goal_satisfied, select_best, RankKey, Rankable};
use crate::agents::{
    decide, observe, reason, summarize, AgentError, AgentRole, AgentSettings, Backend, ControlPlan, CycleContext,
    History, HistoryEntry, PlanStep, RunDigest,
};
use crate::sim::{derive_seed, Container, HomogeneityReading, RandomSource};
use crate::twin::{render_text, ExecutionOutcome, FinishStatus, FunctionCall, FunctionRegistry, SimulationSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    Success,
    GiveUp,
    BudgetExhausted,
    AgentFailure,
    /// Stopped by an abort request mid-run.
    Aborted,
}

impl TerminalStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminalStatus::Success => "success",
            TerminalStatus::GiveUp => "give_up",
            TerminalStatus::BudgetExhausted => "budget_exhausted",
            TerminalStatus::AgentFailure => "agent_failure",
            TerminalStatus::Aborted => "aborted",
        }
    }
}

impl fmt::Display for TerminalStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_index: u32,
    pub terminal_status: TerminalStatus,
    pub final_metric: HomogeneityReading,
    pub final_grid: String,
    pub executed_calls: Vec<FunctionCall>,
    pub total_shakes: u32,
    pub cycles: u32,
    pub control_plan: ControlPlan,
}

impl Rankable for RunResult {
    fn rank_key(&self) -> RankKey {
        RankKey {
            metric: self.final_metric.raw,
            total_shakes: self.total_shakes,
            run_index: self.run_index,
        }
    }
}

impl RunResult {
    /// Pour order such as `30% L - 30% N - 30% H - 10% L`.
    pub fn pour_order(&self) -> String {
        let order: Vec<String> = self
            .executed_calls
            .iter()
            .filter(|c| matches!(c, FunctionCall::AddBalls { .. }))
            .map(FunctionCall::label)
            .collect();
        if order.is_empty() {
            "none".into()
        } else {
            order.join(" - ")
        }
    }

    pub fn digest(&self, goal: &str) -> RunDigest {
        RunDigest {
            goal: goal.to_string(),
            run_index: self.run_index,
            status: self.terminal_status.as_str().to_string(),
            final_metric: self.final_metric.raw,
            total_shakes: self.total_shakes,
            executed_calls: self.executed_calls.clone(),
        }
    }

    /// Reads a result back from a `run_summary` payload.
    pub fn from_payload(payload: &Value) -> Option<Self> {
        serde_json::from_value(payload.get("result")?.clone()).ok()
    }
}

/// Plan assembled from the log when the summarization agent is skipped or fails.
pub fn fallback_plan(digest: &RunDigest) -> ControlPlan {
    ControlPlan {
        steps: digest
            .executed_calls
            .iter()
            .map(|c| PlanStep {
                action: c.label(),
                call: *c,
            })
            .collect(),
        final_metric: digest.final_metric,
        narrative: format!(
            "Run {} ended ({}) with degree of even distribution {:.3} after {} shakes.",
            digest.run_index, digest.status, digest.final_metric, digest.total_shakes
        ),
    }
}

/// Mutable state of the run in progress.
#[derive(Debug, Clone)]
pub struct RunState {
    pub run_index: u32,
    pub container: Container,
    pub rng: RandomSource,
    pub cycle_index: u32,
    pub executed_calls: Vec<FunctionCall>,
    pub total_shakes: u32,
    pub history: History,
    pub feedback: Option<String>,
    pub terminal: Option<TerminalStatus>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CycleOutcome {
    Continue,
    /// The call was rejected; the message goes to the next observation.
    ErrorFedBack(String),
    Terminal(TerminalStatus),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationResult {
    pub runs: Vec<RunResult>,
    pub best_run_index: Option<u32>,
    pub report: String,
    pub aborted: bool,
}

impl ExplorationResult {
    pub fn best_run(&self) -> Option<&RunResult> {
        let idx = self.best_run_index?;
        self.runs.iter().find(|r| r.run_index == idx)
    }
}

/// One user session: configuration, backend, event log and finished runs.
pub struct Session {
    config: SessionConfig,
    backend: Arc<dyn Backend>,
    registry: FunctionRegistry,
    settings: AgentSettings,
    log: EventLog,
    control: SessionControl,
    runs: Vec<RunResult>,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session")
            .field("session_id", &self.log.session_id())
            .field("backend", &self.backend.name())
            .field("runs", &self.runs.len())
            .finish()
    }
}

impl Session {
    pub fn new(config: SessionConfig, backend: Arc<dyn Backend>) -> Result<Self, ConfigError> {
        Self::with_id(uuid::Uuid::new_v4().to_string(), config, backend)
    }

    pub fn with_id(
        session_id: impl Into<String>,
        config: SessionConfig,
        backend: Arc<dyn Backend>,
    ) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self {
            registry: FunctionRegistry::with_max_shake(config.max_shake_per_call),
            settings: config.agent_settings(),
            config,
            backend,
            log: EventLog::new(session_id),
            control: SessionControl::default(),
            runs: Vec::new(),
        })
    }

    pub fn with_control(mut self, control: SessionControl) -> Self {
        self.control = control;
        self
    }

    pub fn add_sink(&mut self, sink: Box<dyn EventSink>) {
        self.log.add_sink(sink);
    }

    pub fn id(&self) -> &str {
        self.log.session_id()
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn registry(&self) -> &FunctionRegistry {
        &self.registry
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn control(&self) -> SessionControl {
        self.control.clone()
    }

    pub fn runs(&self) -> &[RunResult] {
        &self.runs
    }

    /// Fresh, empty container with the run's own random stream.
    pub fn start_run(&self, run_index: u32) -> RunState {
        RunState {
            run_index,
            container: Container::new(self.config.rows, self.config.cols).expect("validated dimensions"),
            rng: RandomSource::new(derive_seed(self.config.seed, run_index as u64)),
            cycle_index: 0,
            executed_calls: Vec::new(),
            total_shakes: 0,
            history: History::default(),
            feedback: None,
            terminal: None,
        }
    }

    fn previous_runs_text(&self, first_run: u32) -> String {
        self.runs
            .iter()
            .filter(|r| r.run_index >= first_run)
            .map(|r| {
                format!(
                    "- run {}: {}, degree {:.4}, shakes {}, order: {}",
                    r.run_index,
                    r.terminal_status,
                    r.final_metric.raw,
                    r.total_shakes,
                    r.pour_order()
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn log_agent_error(&mut self, run: &RunState, err: &AgentError) {
        let role = match err {
            AgentError::Backend { role, .. } | AgentError::Failure { role, .. } => role.as_str(),
            AgentError::Prompt(_) => "prompt",
        };
        self.log.append(
            Stage::Error,
            run.run_index,
            run.cycle_index,
            json!({"role": role, "error": err.to_string(), "raw_texts": err.raw_texts()}),
        );
    }

    fn agent_failed(&mut self, run: &mut RunState, err: AgentError) -> CycleOutcome {
        self.log_agent_error(run, &err);
        run.terminal = Some(TerminalStatus::AgentFailure);
        CycleOutcome::Terminal(TerminalStatus::AgentFailure)
    }

    /// Observation, reasoning, decision, execution and metric for one cycle.
    pub fn run_cycle(&mut self, run: &mut RunState, first_run: u32) -> CycleOutcome {
        let (r, c) = (run.run_index, run.cycle_index);
        let threshold = self.config.metric_threshold;
        let snapshot = SimulationSnapshot::capture(&run.container, r, c, run.total_shakes);
        let previous = self.previous_runs_text(first_run);
        let goal = self.config.goal_text.clone();
        let feedback = run.feedback.clone();
        let ctx = CycleContext {
            goal: &goal,
            threshold,
            snapshot: &snapshot,
            max_cycles: self.config.max_cycles_per_run,
            feedback: feedback.as_deref(),
            previous_runs: &previous,
        };
        let backend = Arc::clone(&self.backend);

        let obs = match observe(&ctx, backend.as_ref(), &self.settings) {
            Ok(o) => o,
            Err(e) => return self.agent_failed(run, e),
        };
        self.log.append(
            Stage::Observation,
            r,
            c,
            json!({"snapshot": snapshot, "output": obs.output, "raw_texts": obs.raw_texts}),
        );

        let reasoning = match reason(&ctx, &obs.output, &run.history, backend.as_ref(), &self.settings) {
            Ok(o) => o,
            Err(e) => return self.agent_failed(run, e),
        };
        self.log.append(
            Stage::Reasoning,
            r,
            c,
            json!({"output": reasoning.output, "raw_texts": reasoning.raw_texts}),
        );

        let decision = match decide(&ctx, &reasoning.output, &self.registry, backend.as_ref(), &self.settings) {
            Ok(o) => o,
            Err(e) => return self.agent_failed(run, e),
        };
        let call = decision.output.call;
        self.log.append(
            Stage::Decision,
            r,
            c,
            json!({"call": call, "rationale": decision.output.rationale, "raw_texts": decision.raw_texts}),
        );

        let result = self
            .registry
            .execute(&call, &mut run.container, &self.config.shake_config, &mut run.rng);
        let mut execution = json!({"call": call});
        let outcome = match result {
            Ok(ExecutionOutcome::Finished(FinishStatus::Success))
                if !goal_satisfied(run.container.homogeneity().raw, threshold) =>
            {
                let msg = format!(
                    "finish_run(success) rejected: degree of even distribution {} is below the target {}",
                    run.container.homogeneity().raw,
                    threshold
                );
                CycleOutcome::ErrorFedBack(msg)
            }
            Ok(outcome) => {
                run.executed_calls.push(call);
                execution["outcome"] = match outcome {
                    ExecutionOutcome::Added { balls } => json!({"added_balls": balls}),
                    ExecutionOutcome::Shaken { times } => {
                        run.total_shakes += times;
                        json!({"shaken": times})
                    }
                    ExecutionOutcome::Finished(status) => json!({"finished": status}),
                };
                match outcome {
                    ExecutionOutcome::Finished(FinishStatus::Success) => {
                        CycleOutcome::Terminal(TerminalStatus::Success)
                    }
                    ExecutionOutcome::Finished(FinishStatus::GiveUp) => {
                        CycleOutcome::Terminal(TerminalStatus::GiveUp)
                    }
                    _ => CycleOutcome::Continue,
                }
            }
            Err(e) => CycleOutcome::ErrorFedBack(e.to_string()),
        };
        let outcome_text = match &outcome {
            CycleOutcome::ErrorFedBack(msg) => {
                execution["status"] = json!("error");
                execution["error"] = json!(msg);
                run.feedback = Some(msg.clone());
                format!("error: {msg}")
            }
            _ => {
                execution["status"] = json!("ok");
                run.feedback = None;
                "ok".to_string()
            }
        };
        self.log.append(Stage::Execution, r, c, execution);

        let reading = run.container.homogeneity();
        self.log.append(
            Stage::Metric,
            r,
            c,
            json!({
                "raw": reading.raw,
                "normalized": reading.normalized,
                "ball_count": reading.ball_count,
                "free_cells": run.container.free_cells(),
                "shakes_so_far": run.total_shakes,
                "grid_text": render_text(&run.container),
            }),
        );
        run.history.push(HistoryEntry {
            cycle_index: c,
            call,
            outcome: outcome_text,
            metric: reading.raw,
        });
        run.cycle_index += 1;

        if let CycleOutcome::Terminal(status) = outcome {
            run.terminal = Some(status);
            return outcome;
        }
        if run.cycle_index >= self.config.max_cycles_per_run {
            let status = if goal_satisfied(reading.raw, threshold) {
                TerminalStatus::Success
            } else {
                TerminalStatus::BudgetExhausted
            };
            run.terminal = Some(status);
            return CycleOutcome::Terminal(status);
        }
        outcome
    }

    /// Closes a run: summarization, `run_summary` event, bookkeeping.
    pub fn finish_run(&mut self, run: RunState) -> RunResult {
        let status = run.terminal.unwrap_or(TerminalStatus::Aborted);
        let reading = run.container.homogeneity();
        let mut result = RunResult {
            run_index: run.run_index,
            terminal_status: status,
            final_metric: reading,
            final_grid: render_text(&run.container),
            executed_calls: run.executed_calls,
            total_shakes: run.total_shakes,
            cycles: run.cycle_index,
            control_plan: ControlPlan {
                steps: Vec::new(),
                final_metric: reading.raw,
                narrative: String::new(),
            },
        };
        let digest = result.digest(&self.config.goal_text);
        let mut raw_texts: Vec<String> = Vec::new();
        // a failed or aborted pipeline is not asked for a summary
        result.control_plan = if matches!(status, TerminalStatus::AgentFailure | TerminalStatus::Aborted) {
            fallback_plan(&digest)
        } else {
            match summarize(&digest, &self.registry, self.backend.as_ref(), &self.settings) {
                Ok(plan) => {
                    raw_texts = plan.raw_texts;
                    plan.output
                }
                Err(e) => {
                    self.log.append(
                        Stage::Error,
                        run.run_index,
                        run.cycle_index,
                        json!({
                            "role": AgentRole::Summarization.as_str(),
                            "error": e.to_string(),
                            "raw_texts": e.raw_texts(),
                        }),
                    );
                    fallback_plan(&digest)
                }
            }
        };
        self.log.append(
            Stage::RunSummary,
            result.run_index,
            run.cycle_index,
            json!({"result": result, "raw_texts": raw_texts}),
        );
        self.runs.push(result.clone());
        result
    }

    /// Runs cycles until a terminal status; `first_run` scopes the
    /// previous-runs context to the current exploration.
    pub fn run_simulation(&mut self, run_index: u32, first_run: u32) -> RunResult {
        let mut run = self.start_run(run_index);
        while run.terminal.is_none() {
            if !self.control.checkpoint() {
                run.terminal = Some(TerminalStatus::Aborted);
                break;
            }
            self.run_cycle(&mut run, first_run);
        }
        self.finish_run(run)
    }

    /// Explores with the configured goal.
    pub fn explore(&mut self) -> ExplorationResult {
        let goal = self.config.goal_text.clone();
        self.explore_goal(&goal)
    }

    /// Up to `max_runs` runs for `goal`, stopping early on success if enabled.
    /// Run indices continue across explorations of one session.
    pub fn explore_goal(&mut self, goal: &str) -> ExplorationResult {
        self.config.goal_text = goal.to_string();
        let first_run = self.runs.len() as u32;
        self.log.append(
            Stage::UserGoal,
            0,
            0,
            json!({"goal": goal, "config": self.config}),
        );
        let mut runs = Vec::new();
        let mut aborted = false;
        for k in 0..self.config.max_runs {
            if !self.control.checkpoint() {
                aborted = true;
                break;
            }
            let result = self.run_simulation(first_run + k, first_run);
            let status = result.terminal_status;
            runs.push(result);
            if status == TerminalStatus::Aborted {
                aborted = true;
                break;
            }
            if status == TerminalStatus::Success && self.config.early_stop {
                break;
            }
        }
        let best_run_index = select_best(&runs).ok().map(|i| runs[i].run_index);
        let report = render_report(goal, &runs, best_run_index, aborted);
        let brief: Vec<Value> = runs
            .iter()
            .map(|r| {
                json!({
                    "run_index": r.run_index,
                    "terminal_status": r.terminal_status,
                    "final_metric": r.final_metric.raw,
                    "total_shakes": r.total_shakes,
                })
            })
            .collect();
        self.log.append(
            Stage::ExplorationSummary,
            0,
            0,
            json!({
                "status": if aborted { "aborted" } else { "completed" },
                "best_run_index": best_run_index,
                "runs": brief,
                "report": report,
            }),
        );
        ExplorationResult {
            runs,
            best_run_index,
            report,
            aborted,
        }
    }
}

/// Human-readable exploration report with the best run's control plan.
pub fn render_report(goal: &str, runs: &[RunResult], best: Option<u32>, aborted: bool) -> String {
    let mut out = format!("Goal: {goal}\n");
    out.push_str(&format!(
        "Runs: {}{}\n",
        runs.len(),
        if aborted { " (aborted)" } else { "" }
    ));
    for r in runs {
        out.push_str(&format!(
            "run {}: {}, degree {:.4} (normalized {:.3}), shakes {}, cycles {}, order: {}\n",
            r.run_index,
            r.terminal_status,
            r.final_metric.raw,
            r.final_metric.normalized,
            r.total_shakes,
            r.cycles,
            r.pour_order()
        ));
    }
    match best.and_then(|i| runs.iter().find(|r| r.run_index == i)) {
        Some(b) => {
            out.push_str(&format!(
                "Best run: {} with degree {:.4} after {} shakes\n",
                b.run_index, b.final_metric.raw, b.total_shakes
            ));
            out.push_str(&format!("Control plan: {}\n", b.control_plan.narrative));
            for (i, step) in b.control_plan.steps.iter().enumerate() {
                out.push_str(&format!("{}. {} {}\n", i + 1, step.action, step.call));
            }
            out.push_str("Final grid:\n");
            out.push_str(&b.final_grid);
            out.push('\n');
        }
        None => out.push_str("Best run: none\n"),
    }
    out
}
