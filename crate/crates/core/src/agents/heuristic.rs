//! Deterministic rule-based stand-in for a language model.
//!
//! The backend reads the same rendered prompts a remote model would see,
//! recognises the role from the `ROLE:` line of the system message and
//! answers with valid JSON for that role. Its output is a pure function of
//! the prompt text.
//!
//! Policy: fill the container in interleaved light/normal/heavy batches
//! (coarse batches in the first run, finer ones in later runs), then shake in
//! small increments while the metric is below target. Finish with success once
//! the container is full and the target is met; give up when the budget runs
//! out or shaking starts to unmix the container.

use serde_json::{json, Value};

use super::backend::{Backend, BackendError, ChatMessage, ChatRole, GenerationParams};
use crate::sim::BallType;
use crate::twin::{FunctionCall, FunctionRegistry};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeuristicBackend {
    /// Pour batch size (percent) for run `i`; the last entry repeats.
    pub batch_percents: Vec<u32>,
    pub shake_step: u32,
    /// Minimum shakes before a falling metric triggers give-up.
    pub patience_shakes: u32,
}

impl Default for HeuristicBackend {
    fn default() -> Self {
        Self {
            batch_percents: vec![30, 20, 10],
            shake_step: 2,
            patience_shakes: 6,
        }
    }
}

const POUR_ORDER: [BallType; 3] = [BallType::Light, BallType::Normal, BallType::Heavy];

fn line_after<'a>(text: &'a str, prefix: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(prefix)).map(str::trim)
}

/// Value of `key=` inside a whitespace-separated `k=v` line.
fn kv<T: std::str::FromStr>(line: &str, key: &str) -> Option<T> {
    line.split([' ', ','])
        .find_map(|tok| tok.strip_prefix(key)?.strip_prefix('='))
        .and_then(|v| v.parse().ok())
}

/// Line that follows a header line exactly equal to `header`.
fn block_after<'a>(text: &'a str, header: &'a str) -> impl Iterator<Item = &'a str> + 'a {
    text.lines().skip_while(move |l| l.trim() != header).skip(1)
}

fn first_number(s: &str) -> Option<f64> {
    s.split_whitespace().next()?.parse().ok()
}

fn call_description(call: &FunctionCall) -> String {
    match *call {
        FunctionCall::AddBalls { ball, percent } => format!("pour {percent}% {} balls", ball.name()),
        FunctionCall::Shake { times } => format!("shake {times} times"),
        FunctionCall::FinishRun { status } => format!("finish run ({})", status.as_str()),
    }
}

#[derive(Debug, Default)]
struct ContainerFacts {
    capacity: usize,
    free: usize,
    light: usize,
    normal: usize,
    heavy: usize,
    shakes: u32,
}

impl ContainerFacts {
    fn occupied(&self) -> usize {
        self.capacity - self.free.min(self.capacity)
    }
}

#[derive(Debug)]
struct HistoryFact {
    is_shake: bool,
    ok: bool,
    metric: f64,
}

fn parse_history(user: &str) -> Vec<HistoryFact> {
    block_after(user, "Recent cycles (oldest first):")
        .take_while(|l| l.starts_with("- cycle "))
        .filter_map(|l| {
            let (_, rest) = l.split_once(": ")?;
            let (call, outcome) = rest.rsplit_once(" -> ")?;
            let metric = outcome.rsplit_once("metric ")?.1.trim().parse().ok()?;
            Some(HistoryFact {
                is_shake: call.contains("\"shake\""),
                ok: outcome.starts_with("ok"),
                metric,
            })
        })
        .collect()
}

impl HeuristicBackend {
    fn batch_for_run(&self, run: usize) -> u32 {
        self.batch_percents
            .get(run)
            .or(self.batch_percents.last())
            .copied()
            .unwrap_or(10)
            .clamp(1, 100)
    }

    /// Next interleaved batch, or `None` when no pour of at least one ball fits.
    fn next_pour(&self, facts: &ContainerFacts, batch: u32) -> Option<(BallType, u32)> {
        if facts.capacity == 0 || facts.free == 0 {
            return None;
        }
        let balls = |p: u32| (p as usize * facts.capacity + 50) / 100;
        let per_batch = balls(batch).max(1);
        let ball = POUR_ORDER[(facts.occupied() / per_batch) % POUR_ORDER.len()];
        (1..=batch)
            .rev()
            .find(|&p| (1..=facts.free).contains(&balls(p)))
            .map(|p| (ball, p))
    }

    fn observation(&self, user: &str) -> Value {
        let container = line_after(user, "Container:").unwrap_or_default();
        let capacity: usize = kv(container, "capacity").unwrap_or(0);
        let free: usize = kv(container, "free").unwrap_or(0);
        let counts = line_after(user, "Ball counts:").unwrap_or_default();
        let light: usize = kv(counts, "light").unwrap_or(0);
        let normal: usize = kv(counts, "normal").unwrap_or(0);
        let heavy: usize = kv(counts, "heavy").unwrap_or(0);
        let metric = line_after(user, "Degree of even distribution:")
            .and_then(first_number)
            .unwrap_or(0.0);
        let feedback = line_after(user, "Feedback from last action:").unwrap_or("none");

        let occupied = capacity.saturating_sub(free);
        let mut key = vec![
            format!("{occupied} of {capacity} cells occupied, {free} free"),
            format!("ball counts: light {light}, normal {normal}, heavy {heavy}"),
            format!("degree of even distribution {metric:.3}"),
        ];
        let mut patterns = Vec::new();
        if occupied == 0 {
            patterns.push("container is empty".to_string());
        } else {
            if free == 0 {
                patterns.push("container is full".to_string());
            }
            let kinds = [light, normal, heavy].iter().filter(|&&n| n > 0).count();
            if kinds == 1 {
                patterns.push("only one ball type present".to_string());
            }
            let grid: Vec<Vec<u8>> = block_after(user, "Grid:")
                .take_while(|l| l.starts_with(|c: char| c.is_ascii_digit()) && !l.starts_with("0=empty"))
                .map(|l| l.split_whitespace().filter_map(|t| t.parse().ok()).collect())
                .collect();
            let filled: Vec<&Vec<u8>> = grid.iter().filter(|r| r.iter().all(|&c| c != 0)).collect();
            let uniform = filled.iter().filter(|r| r.windows(2).all(|w| w[0] == w[1])).count();
            if kinds > 1 && !filled.is_empty() && uniform * 2 >= filled.len() {
                patterns.push(format!(
                    "layered: {uniform} of {} full rows hold a single ball type",
                    filled.len()
                ));
            }
        }
        if feedback != "none" {
            key.push(format!("last action failed: {feedback}"));
        }
        json!({
            "key_observations": key,
            "metric_value": metric,
            "notable_patterns": patterns,
        })
    }

    fn reasoning(&self, user: &str) -> Value {
        let threshold = line_after(user, "Target degree of even distribution:")
            .and_then(first_number)
            .unwrap_or(2.2);
        let run = line_after(user, "Run:")
            .and_then(|s| s.parse::<usize>().ok())
            .unwrap_or(0);
        let remaining: u32 = line_after(user, "Cycle:")
            .and_then(|l| l.rsplit_once("remaining after this one:"))
            .and_then(|(_, r)| r.trim().parse().ok())
            .unwrap_or(0);
        let container = line_after(user, "Container:").unwrap_or_default();
        let facts = ContainerFacts {
            capacity: kv(container, "capacity").unwrap_or(0),
            free: kv(container, "free").unwrap_or(0),
            light: kv(container, "light").unwrap_or(0),
            normal: kv(container, "normal").unwrap_or(0),
            heavy: kv(container, "heavy").unwrap_or(0),
            shakes: kv(container, "shakes_so_far").unwrap_or(0),
        };
        let metric = block_after(user, "Observation:")
            .next()
            .and_then(|l| serde_json::from_str::<Value>(l).ok())
            .and_then(|v| v["metric_value"].as_f64())
            .unwrap_or(0.0);
        let history = parse_history(user);

        let batch = self.batch_for_run(run);
        let pour = self.next_pour(&facts, batch);
        let shake = format!("shake {} times", self.shake_step);
        let mut candidates = Vec::new();
        if let Some((ball, p)) = pour {
            candidates.push(format!("pour {p}% {}", ball.name()));
        }
        candidates.push(shake.clone());
        candidates.push("finish success".to_string());
        candidates.push("finish give_up".to_string());

        let past_peak = facts.shakes >= self.patience_shakes
            && matches!(history.as_slice(), [.., prev, last] if last.is_shake && last.ok && last.metric < prev.metric);

        let (analysis, recommended) = if pour.is_none() && metric >= threshold {
            (
                format!("The container is full and the degree of even distribution {metric:.3} meets the target {threshold}."),
                "finish success".to_string(),
            )
        } else if let Some((ball, p)) = pour {
            (
                format!(
                    "The container still has {} free cells (light {}, normal {}, heavy {}). Keep filling in interleaved {batch}% batches so heavier balls land on lighter ones.",
                    facts.free, facts.light, facts.normal, facts.heavy
                ),
                format!("pour {p}% {}", ball.name()),
            )
        } else if remaining == 0 {
            (
                format!("No cycles remain and the degree of even distribution {metric:.3} is below the target {threshold}."),
                "finish give_up".to_string(),
            )
        } else if past_peak {
            (
                format!(
                    "After {} shakes the degree of even distribution fell to {metric:.3}; further shaking lets the heavy balls settle. Abandon this run and try a finer pouring order.",
                    facts.shakes
                ),
                "finish give_up".to_string(),
            )
        } else {
            (
                format!(
                    "The container is full but the degree of even distribution {metric:.3} is below the target {threshold}. Shaking lets heavy balls sink into the lighter layers."
                ),
                shake,
            )
        };
        json!({
            "analysis": analysis,
            "candidate_strategies": candidates,
            "recommended": recommended,
        })
    }

    fn decision(&self, user: &str) -> Value {
        let reasoning = block_after(user, "Reasoning:")
            .next()
            .and_then(|l| serde_json::from_str::<Value>(l).ok())
            .unwrap_or(Value::Null);
        let recommended = reasoning["recommended"].as_str().unwrap_or_default();
        let words: Vec<&str> = recommended.split_whitespace().collect();
        let (function, args) = match words.as_slice() {
            ["pour", pct, kind, ..] => {
                let percent: u32 = pct.trim_end_matches('%').parse().unwrap_or(10);
                let ball = BallType::ALL
                    .into_iter()
                    .find(|b| b.name() == *kind)
                    .unwrap_or(BallType::Light);
                ("add_balls", json!({"type": ball.symbol(), "percent": percent}))
            }
            ["shake", n, ..] => ("shake", json!({"times": n.parse::<u32>().unwrap_or(1)})),
            ["finish", "success", ..] => ("finish_run", json!({"status": "success"})),
            _ => ("finish_run", json!({"status": "give_up"})),
        };
        json!({
            "function": function,
            "args": args,
            "rationale": format!("following the recommendation: {recommended}"),
        })
    }

    fn summary(&self, user: &str) -> Value {
        let parser = FunctionRegistry::with_max_shake(u32::MAX);
        let calls: Vec<FunctionCall> = block_after(user, "Executed calls (in order):")
            .filter_map(|l| serde_json::from_str::<Value>(l).ok())
            .filter_map(|v| parser.validate(&v).ok())
            .collect();
        let status = line_after(user, "Terminal status:").unwrap_or("unknown");
        let metric = line_after(user, "Final degree of even distribution:")
            .and_then(first_number)
            .unwrap_or(0.0);
        let run = line_after(user, "Run:").unwrap_or("0");
        let steps: Vec<Value> = calls
            .iter()
            .map(|c| json!({"action": call_description(c), "call": c.to_json()}))
            .collect();
        let order: Vec<String> = calls
            .iter()
            .filter(|c| matches!(c, FunctionCall::AddBalls { .. }))
            .map(FunctionCall::label)
            .collect();
        let shakes: u32 = calls
            .iter()
            .map(|c| match c {
                FunctionCall::Shake { times } => *times,
                _ => 0,
            })
            .sum();
        let narrative = if calls.is_empty() {
            format!("Run {run} ended ({status}) without executing any action.")
        } else {
            format!(
                "Run {run} ended ({status}) with degree of even distribution {metric:.3}. Order: {}. Shake: {shakes} times.",
                if order.is_empty() { "none".to_string() } else { order.join(" - ") }
            )
        };
        json!({"narrative": narrative, "steps": steps})
    }
}

impl Backend for HeuristicBackend {
    fn complete(&self, messages: &[ChatMessage], _params: &GenerationParams) -> Result<String, BackendError> {
        let system = messages
            .iter()
            .find(|m| m.role == ChatRole::System)
            .ok_or_else(|| BackendError::InvalidRequest("no system message".into()))?;
        let user = messages
            .iter()
            .find(|m| m.role == ChatRole::User)
            .map(|m| m.text.as_str())
            .ok_or_else(|| BackendError::InvalidRequest("no user message".into()))?;
        let role = line_after(&system.text, "ROLE:").unwrap_or_default();
        let reply = match role {
            "observation" => self.observation(user),
            "reasoning" => self.reasoning(user),
            "decision" => self.decision(user),
            "summarization" => self.summary(user),
            other => return Err(BackendError::InvalidRequest(format!("unknown role {other:?}"))),
        };
        Ok(reply.to_string())
    }

    fn name(&self) -> &str {
        "heuristic"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{decide, observe, reason, AgentSettings, CycleContext, History, HistoryEntry};
    use crate::sim::{Cell, Container, RandomSource};
    use crate::twin::{FinishStatus, SimulationSnapshot};

    fn run_chain(container: &Container, history: &History, cycle: u32) -> (Vec<String>, String, FunctionCall) {
        let backend = HeuristicBackend::default();
        let settings = AgentSettings::default();
        let snapshot = SimulationSnapshot::capture(container, 0, cycle, 0);
        let ctx = CycleContext {
            goal: "an evenly distributed mixture",
            threshold: 2.2,
            snapshot: &snapshot,
            max_cycles: 30,
            feedback: None,
            previous_runs: "",
        };
        let obs = observe(&ctx, &backend, &settings).unwrap().output;
        let reasoning = reason(&ctx, &obs, history, &backend, &settings).unwrap().output;
        let decision = decide(&ctx, &reasoning, &FunctionRegistry::default(), &backend, &settings)
            .unwrap()
            .output;
        (obs.notable_patterns, reasoning.recommended, decision.call)
    }

    #[test]
    fn empty_container_pours() {
        let (patterns, recommended, call) = run_chain(&Container::new(10, 10).unwrap(), &History::default(), 0);
        assert!(patterns.iter().any(|p| p == "container is empty"));
        assert_eq!(recommended, "pour 30% light");
        assert_eq!(
            call,
            FunctionCall::AddBalls {
                ball: BallType::Light,
                percent: 30
            }
        );
    }

    #[test]
    fn full_unmixed_container_shakes() {
        let layered = Container::from_fn(10, 10, |r, _| {
            Cell::Ball(if r < 5 { BallType::Heavy } else { BallType::Light })
        })
        .unwrap();
        let (patterns, recommended, call) = run_chain(&layered, &History::default(), 4);
        assert!(patterns.iter().any(|p| p.starts_with("layered")));
        assert!(recommended.starts_with("shake"));
        assert_eq!(call, FunctionCall::Shake { times: 2 });
    }

    #[test]
    fn met_goal_finishes() {
        let checker = Container::from_fn(10, 10, |r, c| {
            Cell::Ball(BallType::ALL[(r + 2 * c) % 3])
        })
        .unwrap();
        assert!(checker.homogeneity().raw >= 2.2);
        let (_, recommended, call) = run_chain(&checker, &History::default(), 5);
        assert_eq!(recommended, "finish success");
        assert_eq!(
            call,
            FunctionCall::FinishRun {
                status: FinishStatus::Success
            }
        );
    }

    #[test]
    fn falling_metric_after_patience_gives_up() {
        let layered = Container::from_fn(10, 10, |r, _| {
            Cell::Ball(if r < 5 { BallType::Light } else { BallType::Heavy })
        })
        .unwrap();
        let backend = HeuristicBackend::default();
        let settings = AgentSettings::default();
        let snapshot = SimulationSnapshot::capture(&layered, 0, 10, 8);
        let ctx = CycleContext {
            goal: "g",
            threshold: 2.2,
            snapshot: &snapshot,
            max_cycles: 30,
            feedback: None,
            previous_runs: "",
        };
        let mut history = History::default();
        for (i, m) in [1.9, 1.7].into_iter().enumerate() {
            history.push(HistoryEntry {
                cycle_index: 8 + i as u32,
                call: FunctionCall::Shake { times: 2 },
                outcome: "ok".into(),
                metric: m,
            });
        }
        let obs = observe(&ctx, &backend, &settings).unwrap().output;
        let r = reason(&ctx, &obs, &history, &backend, &settings).unwrap().output;
        assert_eq!(r.recommended, "finish give_up");
    }

    #[test]
    fn later_runs_use_finer_batches() {
        let b = HeuristicBackend::default();
        assert_eq!(b.batch_for_run(0), 30);
        assert_eq!(b.batch_for_run(2), 10);
        assert_eq!(b.batch_for_run(7), 10);
        let facts = ContainerFacts {
            capacity: 100,
            free: 10,
            ..Default::default()
        };
        assert_eq!(b.next_pour(&facts, 30), Some((BallType::Light, 10)));
    }

    #[test]
    fn deterministic_replies() {
        let mut c = Container::new(10, 10).unwrap();
        c.add_balls(BallType::Heavy, 50, &mut RandomSource::new(2)).unwrap();
        let a = run_chain(&c, &History::default(), 1);
        let b = run_chain(&c, &History::default(), 1);
        assert_eq!(a, b);
    }
}
