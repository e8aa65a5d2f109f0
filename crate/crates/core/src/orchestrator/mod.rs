//! Session orchestration: the observe/reason/decide/execute cycle, runs,
//! explorations, the event log, replay and the non-agent baselines.

pub mod baselines;
mod config;
mod control;
mod events;
mod render;
mod replay;
mod session;

use std::cmp::Ordering;

use thiserror::Error;

pub use config::{BackendConfig, BackendKind, ConfigError, SessionConfig, DEFAULT_GOAL};
pub use control::{ControlAction, SessionControl};
pub use events::{
    read_jsonl, read_jsonl_file, utc_timestamp, EventLog, EventRecord, EventSink, JsonlWriter, LogError, Stage,
};
pub use render::{render_run, RenderError};
pub use replay::{replay, ReplayError, ReplayReport};
pub use session::{
    fallback_plan, render_report, CycleOutcome, ExplorationResult, RunResult, RunState, Session, TerminalStatus,
};

/// Inclusive comparison on the raw metric scale.
pub fn goal_satisfied(metric: f64, threshold: f64) -> bool {
    metric >= threshold
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("cannot select the best of an empty list")]
pub struct EmptyError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankKey {
    pub metric: f64,
    pub total_shakes: u32,
    pub run_index: u32,
}

pub trait Rankable {
    fn rank_key(&self) -> RankKey;
}

impl Rankable for RankKey {
    fn rank_key(&self) -> RankKey {
        *self
    }
}

/// `Less` means `a` ranks ahead of `b`: higher metric, then fewer shakes, then lower index.
fn rank_order(a: &RankKey, b: &RankKey) -> Ordering {
    b.metric
        .total_cmp(&a.metric)
        .then(a.total_shakes.cmp(&b.total_shakes))
        .then(a.run_index.cmp(&b.run_index))
}

/// Position of the best item.
pub fn select_best<T: Rankable>(items: &[T]) -> Result<usize, EmptyError> {
    items
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| rank_order(&a.rank_key(), &b.rank_key()))
        .map(|(i, _)| i)
        .ok_or(EmptyError)
}
