//! Side-by-side comparison of the agent pipeline and the baselines.

use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::agents::HeuristicBackend;
use crate::orchestrator::baselines::{
    evaluate, hill_climb, random_search, random_setting, BaselineError, Batch, ParamSpace, Setting,
};
use crate::orchestrator::{Session, SessionConfig};
use crate::sim::{derive_seed, RandomSource};
use crate::twin::FunctionCall;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Heuristic,
    Random,
    HillClimb,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Heuristic => "heuristic",
            Strategy::Random => "random",
            Strategy::HillClimb => "hillclimb",
        }
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "heuristic" => Ok(Strategy::Heuristic),
            "random" => Ok(Strategy::Random),
            "hillclimb" => Ok(Strategy::HillClimb),
            other => Err(format!("unknown strategy {other:?} (heuristic|random|hillclimb)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub strategies: Vec<Strategy>,
    pub trials: u32,
    /// Simulations averaged per evaluated setting.
    pub seeds: u32,
    /// Settings sampled by random search per trial.
    pub random_budget: u64,
    pub hill_steps: u32,
    pub space: ParamSpace,
    /// Seed of the common evaluation that scores every strategy's final setting.
    pub eval_seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            strategies: vec![Strategy::Heuristic, Strategy::Random, Strategy::HillClimb],
            trials: 5,
            seeds: 5,
            random_budget: 30,
            hill_steps: 10,
            space: ParamSpace::standard(),
            eval_seed: 7919,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub strategy: String,
    pub trial: u32,
    pub composition: String,
    pub shake_times: u32,
    pub mean_metric: f64,
    /// Simulator runs consumed by the search.
    pub evaluations_used: u64,
}

/// Pours in order, then the total number of shakes, of a call sequence.
pub fn setting_from_calls(calls: &[FunctionCall]) -> Setting {
    let mut setting = Setting {
        composition: Vec::new(),
        shake_times: 0,
    };
    for c in calls {
        match *c {
            FunctionCall::AddBalls { ball, percent } => setting.composition.push(Batch { ball, percent }),
            FunctionCall::Shake { times } => setting.shake_times += times,
            FunctionCall::FinishRun { .. } => {}
        }
    }
    setting
}

fn heuristic_trial(trial: u32, space: &ParamSpace) -> (Setting, u64) {
    let config = SessionConfig {
        seed: trial as u64 + 1,
        rows: space.rows,
        cols: space.cols,
        shake_config: space.shake_config,
        ..SessionConfig::default()
    };
    let mut session =
        Session::with_id(format!("bench-{trial}"), config, Arc::new(HeuristicBackend::default())).expect("valid config");
    let out = session.explore();
    let setting = out
        .best_run()
        .map(|r| setting_from_calls(&r.executed_calls))
        .unwrap_or(Setting {
            composition: Vec::new(),
            shake_times: 0,
        });
    (setting, out.runs.len() as u64)
}

pub fn run_bench(config: &BenchConfig) -> Result<Vec<BenchRow>, BaselineError> {
    if config.trials == 0 || config.seeds == 0 {
        return Err(BaselineError::Argument("trials and seeds must be at least 1".into()));
    }
    let space = &config.space;
    let mut rows = Vec::new();
    for &strategy in &config.strategies {
        for trial in 0..config.trials {
            let trial_seed = derive_seed(trial as u64, 0xbe7c);
            let (setting, evaluations) = match strategy {
                Strategy::Heuristic => heuristic_trial(trial, space),
                Strategy::Random => {
                    let best = random_search(space, config.random_budget, config.seeds, trial_seed)?;
                    (best.setting, best.evaluations_used * config.seeds as u64)
                }
                Strategy::HillClimb => {
                    let start = random_setting(space, &mut RandomSource::new(trial_seed));
                    let best = hill_climb(space, start, config.hill_steps, config.seeds, trial_seed)?;
                    (best.setting, best.evaluations_used * config.seeds as u64)
                }
            };
            let mean_metric = evaluate(&setting, space, config.seeds, config.eval_seed)?;
            rows.push(BenchRow {
                strategy: strategy.as_str().into(),
                trial,
                composition: setting.composition_string(),
                shake_times: setting.shake_times,
                mean_metric,
                evaluations_used: evaluations,
            });
        }
    }
    Ok(rows)
}

pub fn write_csv(rows: &[BenchRow], out: impl Write) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
