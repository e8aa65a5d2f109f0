//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestCaseError, TestRunner};
use serde_json::{json, Value};
use tower::ServiceExt;

use mixtwin::agents::{decide, AgentSettings, ControlPlan, CycleContext, HeuristicBackend, Reasoning, ScriptedBackend};
use mixtwin::orchestrator::baselines::{evaluate, hill_climb, random_search, Batch, ParamSpace, Setting};
use mixtwin::orchestrator::{
    read_jsonl_file, replay, select_best, EventRecord, JsonlWriter, ReplayError, RunResult, Session,
    SessionConfig, Stage, TerminalStatus,
};
use mixtwin::service::{router, transition, AppState, Command, SessionState};
use mixtwin::sim::{BallType, Cell, Container, HomogeneityReading, RandomSource, ShakeConfig};
use mixtwin::twin::{FunctionCall, FunctionRegistry, SimulationSnapshot};

type Check = Result<String, String>;
type Criterion = (&'static str, Option<Duration>, fn() -> Check);
type Edit = (&'static str, Box<dyn Fn(&EventRecord) -> bool>, &'static str);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- simulator

#[derive(Debug, Clone)]
enum Op {
    Add(BallType, u32),
    Shake(u32),
}

fn op_strategy() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0usize..3, 1u32..=100).prop_map(|(t, p)| Op::Add(BallType::ALL[t], p)),
        (0u32..=6).prop_map(Op::Shake),
    ]
}

fn relabel(c: &Container, perm: [BallType; 3]) -> Container {
    Container::from_fn(c.rows(), c.cols(), |r, col| match c.get(r, col) {
        Cell::Empty => Cell::Empty,
        Cell::Ball(b) => Cell::Ball(perm[b.density_rank() as usize - 1]),
    })
    .unwrap()
}

fn mirror(c: &Container) -> Container {
    Container::from_fn(c.rows(), c.cols(), |r, col| c.get(r, c.cols() - 1 - col)).unwrap()
}

fn apply_ops(rows: usize, cols: usize, seed: u64, ops: &[Op]) -> Result<Container, TestCaseError> {
    let cfg = ShakeConfig::default();
    let mut rng = RandomSource::new(seed);
    let mut c = Container::new(rows, cols).unwrap();
    for op in ops {
        let before = c.type_counts();
        match *op {
            Op::Add(ball, percent) => {
                let want = c.balls_for_percent(percent);
                match c.add_balls(ball, percent, &mut rng) {
                    Ok(n) => {
                        prop_assert_eq!(n, want);
                        prop_assert_eq!(c.type_counts().get(ball), before.get(ball) + want);
                        prop_assert_eq!(c.type_counts().total(), before.total() + want);
                    }
                    Err(_) => prop_assert_eq!(c.type_counts(), before),
                }
            }
            Op::Shake(times) => {
                c.shake(times, &cfg, &mut rng);
                prop_assert_eq!(c.type_counts(), before);
            }
        }
        prop_assert!(c.is_supported());
        let m = c.homogeneity();
        prop_assert!((0.0..=3.0).contains(&m.raw));
        prop_assert!((0.0..=1.0).contains(&m.normalized));
        prop_assert_eq!(m.ball_count, c.occupied());
        if m.ball_count == 0 {
            prop_assert_eq!(m.raw, 0.0);
        }
    }
    Ok(c)
}

fn simulator_properties() -> Check {
    let mut runner = TestRunner::new(ProptestConfig {
        cases: 1000,
        failure_persistence: None,
        ..ProptestConfig::default()
    });
    let strategy = (
        1usize..=10,
        1usize..=10,
        any::<u64>(),
        proptest::collection::vec(op_strategy(), 0..12),
        Just(()).prop_perturb(|_, mut rng| {
            let mut perm = BallType::ALL;
            for i in (1..3).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            perm
        }),
    );
    runner
        .run(&strategy, |(rows, cols, seed, ops, perm)| {
            let a = apply_ops(rows, cols, seed, &ops)?;
            let b = apply_ops(rows, cols, seed, &ops)?;
            prop_assert_eq!(&a, &b, "same seed and ops must give the same grid");
            let m = a.homogeneity().raw;
            prop_assert_eq!(relabel(&a, perm).homogeneity().raw, m);
            prop_assert_eq!(mirror(&a).homogeneity().raw, m);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("1000 cases: conservation, determinism, support, bounds, relabel and mirror symmetry".into())
}

// ---------------------------------------------------------------- metric oracle

fn oracle_homogeneity(c: &Container) -> f64 {
    let offsets = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
    let mut sum = 0usize;
    let mut balls = 0usize;
    for r in 0..c.rows() as i64 {
        for col in 0..c.cols() as i64 {
            if c.get(r as usize, col as usize) == Cell::Empty {
                continue;
            }
            balls += 1;
            let mut kinds = HashSet::new();
            for (dr, dc) in offsets {
                let (nr, nc) = (r + dr, col + dc);
                if nr < 0 || nc < 0 || nr >= c.rows() as i64 || nc >= c.cols() as i64 {
                    continue;
                }
                if let Cell::Ball(b) = c.get(nr as usize, nc as usize) {
                    kinds.insert(b);
                }
            }
            sum += kinds.len();
        }
    }
    if balls == 0 {
        0.0
    } else {
        sum as f64 / balls as f64
    }
}

fn grid(rows: &[&str]) -> Container {
    let cells: Vec<Vec<u8>> = rows
        .iter()
        .map(|r| r.bytes().map(|b| b - b'0').collect())
        .collect();
    Container::from_fn(cells.len(), cells[0].len(), |r, c| Cell::from_code(cells[r][c]).unwrap()).unwrap()
}

fn metric_fixtures() -> Vec<(String, Container, Option<f64>)> {
    let full = |f: &dyn Fn(usize, usize) -> BallType| {
        Container::from_fn(10, 10, |r, c| Cell::Ball(f(r, c))).unwrap()
    };
    let mut v: Vec<(String, Container, Option<f64>)> = vec![
        ("all light".into(), full(&|_, _| BallType::Light), Some(1.0)),
        ("all heavy".into(), full(&|_, _| BallType::Heavy), Some(1.0)),
        ("isolated ball".into(), grid(&["000", "000", "010"]), Some(0.0)),
        ("2x2 L/N block".into(), grid(&["12", "12"]), Some(2.0)),
        (
            "checkerboard".into(),
            full(&|r, c| if (r + c) % 2 == 0 { BallType::Light } else { BallType::Heavy }),
            Some(2.0),
        ),
        (
            "layers H/N/L".into(),
            full(&|r, _| match r {
                0..=2 => BallType::Heavy,
                3..=5 => BallType::Normal,
                _ => BallType::Light,
            }),
            None,
        ),
        (
            "layers L/N/H".into(),
            full(&|r, _| match r {
                0..=3 => BallType::Light,
                4..=6 => BallType::Normal,
                _ => BallType::Heavy,
            }),
            None,
        ),
        (
            "alternating rows".into(),
            full(&|r, _| BallType::ALL[r % 3]),
            None,
        ),
        ("empty".into(), Container::new(10, 10).unwrap(), Some(0.0)),
    ];
    let cfg = ShakeConfig::default();
    let mut k = 0u64;
    while v.len() < 25 {
        let mut rng = RandomSource::new(1000 + k);
        let (rows, cols) = (1 + rng.below(10), 1 + rng.below(10));
        let mut c = Container::new(rows, cols).unwrap();
        for _ in 0..1 + rng.below(6) {
            let ball = BallType::ALL[rng.below(3)];
            let _ = c.add_balls(ball, 5 + rng.below(40) as u32, &mut rng);
            c.shake(rng.below(4) as u32, &cfg, &mut rng);
        }
        v.push((format!("random #{k} ({rows}x{cols})"), c, None));
        k += 1;
    }
    v
}

fn metric_oracle() -> Check {
    let fixtures = metric_fixtures();
    for (name, c, expected) in &fixtures {
        let got = c.homogeneity().raw;
        let oracle = oracle_homogeneity(c);
        ensure(got == oracle, || format!("{name}: metric {got} != oracle {oracle}"))?;
        if let Some(e) = expected {
            ensure(got == *e, || format!("{name}: metric {got} != expected {e}"))?;
        }
    }
    Ok(format!("{} fixtures match the brute-force oracle exactly", fixtures.len()))
}

// ---------------------------------------------------------------- shake dynamics

fn layered(heavy_on_top: bool) -> Container {
    Container::from_fn(10, 10, |r, _| {
        Cell::Ball(match (heavy_on_top, r) {
            (true, 0..=2) => BallType::Heavy,
            (true, 3..=5) => BallType::Normal,
            (true, _) => BallType::Light,
            (false, 0..=3) => BallType::Light,
            (false, 4..=6) => BallType::Normal,
            (false, _) => BallType::Heavy,
        })
    })
    .unwrap()
}

fn mean_at(heavy_on_top: bool, checkpoints: &[u32]) -> Vec<f64> {
    let cfg = ShakeConfig::default();
    let mut sums = vec![0.0; checkpoints.len()];
    for seed in 0..200u64 {
        let mut c = layered(heavy_on_top);
        let mut rng = RandomSource::new(seed);
        let mut done = 0;
        for (i, &k) in checkpoints.iter().enumerate() {
            c.shake(k - done, &cfg, &mut rng);
            done = k;
            sums[i] += c.homogeneity().raw;
        }
    }
    sums.iter().map(|s| s / 200.0).collect()
}

fn shake_dynamics() -> Check {
    let top = mean_at(true, &[0, 8, 64]);
    let (m0, m8, m64) = (top[0], top[1], top[2]);
    ensure(m8 - m0 >= 0.1, || format!("heavy-on-top: after 8 shakes {m8:.4} vs start {m0:.4}"))?;
    ensure(m8 - m64 >= 0.1, || format!("heavy-on-top: after 8 shakes {m8:.4} vs after 64 {m64:.4}"))?;
    let bottom = mean_at(false, &[0, 10]);
    let drift = (bottom[1] - bottom[0]).abs();
    ensure(drift < 0.15, || format!("heavy-at-bottom drift {drift:.4}"))?;
    Ok(format!(
        "heavy-on-top 0/8/64 shakes: {m0:.4}/{m8:.4}/{m64:.4}; heavy-at-bottom drift after 10: {drift:.4}"
    ))
}

// ---------------------------------------------------------------- offline end-to-end

fn offline_end_to_end() -> Check {
    let mut ok = 0;
    let mut failures = Vec::new();
    for seed in 1..=50u64 {
        let config = SessionConfig {
            seed,
            ..SessionConfig::default()
        };
        let mut s = Session::with_id(format!("e2e-{seed}"), config, Arc::new(HeuristicBackend::default())).unwrap();
        let out = s.explore();
        let success = out.runs.len() <= 10
            && out.runs.iter().all(|r| r.cycles <= 30)
            && out
                .best_run()
                .is_some_and(|b| b.terminal_status == TerminalStatus::Success && b.final_metric.raw >= 2.2);
        if success {
            ok += 1;
        } else {
            failures.push(seed);
        }
    }
    ensure(ok * 100 >= 90 * 50, || format!("{ok}/50 sessions succeeded; failed seeds {failures:?}"))?;
    Ok(format!("{ok}/50 sessions succeeded"))
}

// ---------------------------------------------------------------- golden replay

fn record_golden(path: &std::path::Path) {
    let config = SessionConfig {
        seed: 3,
        max_runs: 3,
        ..SessionConfig::default()
    };
    let mut s = Session::with_id("golden", config, Arc::new(HeuristicBackend::default())).unwrap();
    s.add_sink(Box::new(JsonlWriter::create(path).unwrap()));
    s.explore();
}

/// Bumps the digit right after `needle` in the payload of the first record matching `pick`.
fn edit_one_byte(text: &str, pick: impl Fn(&EventRecord) -> bool, needle: &str) -> (String, u64) {
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    for line in lines.iter_mut() {
        let rec: EventRecord = serde_json::from_str(line).unwrap();
        if !pick(&rec) {
            continue;
        }
        let payload_at = line.find("\"payload\":").unwrap();
        let at = payload_at + line[payload_at..].find(needle).expect("needle in payload") + needle.len();
        let mut bytes = line.clone().into_bytes();
        assert!(bytes[at].is_ascii_digit());
        bytes[at] = b'0' + (bytes[at] - b'0' + 1) % 10;
        *line = String::from_utf8(bytes).unwrap();
        return (lines.join("\n") + "\n", rec.seq);
    }
    panic!("no record matched");
}

fn golden_replay() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let golden = dir.path().join("golden.jsonl");
    record_golden(&golden);
    let records = read_jsonl_file(&golden).map_err(|e| e.to_string())?;
    let report = replay(&records).map_err(|e| format!("clean replay failed: {e}"))?;
    ensure(report.events_compared == records.len(), || "not every record compared".into())?;
    let decisions = records.iter().filter(|e| e.stage == Stage::Decision).count();
    let text = fs::read_to_string(&golden).map_err(|e| e.to_string())?;

    let mut detected = Vec::new();
    let edits: [Edit; 2] = [
        (
            "decision reply",
            Box::new(|e: &EventRecord| e.stage == Stage::Decision && e.cycle_index == 1),
            "\\\"percent\\\":",
        ),
        (
            "metric grid",
            Box::new(|e: &EventRecord| e.stage == Stage::Metric && e.cycle_index == 2),
            "\"grid_text\":\"",
        ),
    ];
    for (label, pick, needle) in edits {
        let (edited, seq) = edit_one_byte(&text, pick, needle);
        let path = dir.path().join("edited.jsonl");
        fs::write(&path, edited).map_err(|e| e.to_string())?;
        let tampered = read_jsonl_file(&path).map_err(|e| e.to_string())?;
        match replay(&tampered) {
            Err(ReplayError::Divergence { seq: at, .. }) if at == seq => detected.push(format!("{label} at seq {seq}")),
            other => return Err(format!("{label} edit at seq {seq} gave {other:?}")),
        }
    }
    Ok(format!(
        "{} records ({} decisions, {} runs) reproduced; edits detected: {}",
        records.len(),
        decisions,
        report.runs,
        detected.join(", ")
    ))
}

// ---------------------------------------------------------------- repair loop

fn repair_loop() -> Check {
    let valid = r#"{"function":"shake","args":{"times":3},"rationale":"mix"}"#;
    let backend = ScriptedBackend::new(["shake it three times", r#"{"function":"shake","args":{}}"#, valid]);
    let container = Container::new(10, 10).unwrap();
    let snapshot = SimulationSnapshot::capture(&container, 0, 0, 0);
    let ctx = CycleContext {
        goal: "mix",
        threshold: 2.2,
        snapshot: &snapshot,
        max_cycles: 30,
        feedback: None,
        previous_runs: "",
    };
    let reasoning = Reasoning {
        analysis: "layers".into(),
        candidate_strategies: vec!["shake 3 times".into()],
        recommended: "shake 3 times".into(),
    };
    let run = decide(&ctx, &reasoning, &FunctionRegistry::default(), &backend, &AgentSettings::default())
        .map_err(|e| format!("recovering backend failed: {e}"))?;
    ensure(run.output.call == FunctionCall::Shake { times: 3 }, || format!("{:?}", run.output))?;
    ensure(backend.calls() == 3, || format!("recovering backend saw {} calls", backend.calls()))?;

    let failing = Arc::new(ScriptedBackend::new(["nope", "{\"function\": 7}", "```json\n{}\n```"]));
    let config = SessionConfig {
        max_runs: 1,
        ..SessionConfig::default()
    };
    let mut s = Session::with_id("repair", config, failing.clone()).unwrap();
    let out = s.explore();
    let status = out.runs[0].terminal_status;
    ensure(status == TerminalStatus::AgentFailure, || format!("run ended {status}"))?;
    ensure(failing.calls() == 3, || format!("failing backend saw {} calls", failing.calls()))?;
    Ok("[malformed, malformed, valid] -> decision in 3 calls; [malformed x3] -> agent_failure in 3 calls".into())
}

// ---------------------------------------------------------------- baselines

fn toy_oracle(space: &ParamSpace, eval_seeds: u32, seed: u64) -> (Setting, f64, usize) {
    let mut all = Vec::new();
    let mut stack: Vec<(Vec<Batch>, u32)> = vec![(Vec::new(), 0)];
    while let Some((comp, total)) = stack.pop() {
        if !comp.is_empty() {
            all.push(comp.clone());
        }
        if comp.len() == space.max_batches {
            continue;
        }
        for &p in &space.percents {
            for &ball in &space.ball_types {
                if total + p <= 100 {
                    let mut next = comp.clone();
                    next.push(Batch { ball, percent: p });
                    stack.push((next, total + p));
                }
            }
        }
    }
    let mut best: Option<(Setting, f64)> = None;
    let mut count = 0;
    for comp in &all {
        for shake_times in space.shake_min..=space.shake_max {
            let s = Setting {
                composition: comp.clone(),
                shake_times,
            };
            let score = evaluate(&s, space, eval_seeds, seed).unwrap();
            count += 1;
            let better = match &best {
                None => true,
                Some((bs, bv)) => score > *bv || (score == *bv && s < *bs),
            };
            if better {
                best = Some((s, score));
            }
        }
    }
    let (s, v) = best.unwrap();
    (s, v, count)
}

fn baseline_vs_oracle() -> Check {
    let space = ParamSpace::toy();
    let seed = 11;
    let (oracle_setting, oracle_score, count) = toy_oracle(&space, 5, seed);
    ensure(count as u64 == space.size(), || format!("oracle saw {count} settings, space reports {}", space.size()))?;
    let found = random_search(&space, space.size(), 5, seed).map_err(|e| e.to_string())?;
    ensure(found.score == oracle_score && found.setting == oracle_setting, || {
        format!("random search {} ({}) vs oracle {} ({})", found.setting, found.score, oracle_setting, oracle_score)
    })?;
    let climbed = hill_climb(&space, oracle_setting.clone(), 20, 5, seed).map_err(|e| e.to_string())?;
    ensure(climbed.setting == oracle_setting, || format!("hill climb moved to {}", climbed.setting))?;
    Ok(format!(
        "optimum {} with mean {:.4} over {} settings; hill climb stays",
        oracle_setting, oracle_score, count
    ))
}

// ---------------------------------------------------------------- selection

fn run_result(run_index: u32, metric: f64, total_shakes: u32) -> RunResult {
    RunResult {
        run_index,
        terminal_status: TerminalStatus::GiveUp,
        final_metric: HomogeneityReading {
            raw: metric,
            normalized: ((metric - 1.0) / 2.0).clamp(0.0, 1.0),
            ball_count: 100,
        },
        final_grid: String::new(),
        executed_calls: Vec::new(),
        total_shakes,
        cycles: 0,
        control_plan: ControlPlan {
            steps: Vec::new(),
            final_metric: metric,
            narrative: String::new(),
        },
    }
}

fn scan_best(runs: &[RunResult]) -> usize {
    let mut best = 0;
    for i in 1..runs.len() {
        let (a, b) = (&runs[i], &runs[best]);
        let (am, bm) = (a.final_metric.raw, b.final_metric.raw);
        let better = am > bm
            || (am == bm && a.total_shakes < b.total_shakes)
            || (am == bm && a.total_shakes == b.total_shakes && a.run_index < b.run_index);
        if better {
            best = i;
        }
    }
    best
}

fn multi_run_selection() -> Check {
    let mut rng = RandomSource::new(77);
    let mut ties = 0;
    for case in 0..100 {
        let n = 1 + rng.below(12);
        let mut indices: Vec<u32> = (0..n as u32).collect();
        rng.shuffle(&mut indices);
        let runs: Vec<RunResult> = indices
            .iter()
            .map(|&i| run_result(i, [2.0, 2.1, 2.25][rng.below(3)], rng.below(4) as u32 * 2))
            .collect();
        let top = runs.iter().map(|r| r.final_metric.raw).fold(f64::MIN, f64::max);
        if runs.iter().filter(|r| r.final_metric.raw == top).count() > 1 {
            ties += 1;
        }
        let got = select_best(&runs).map_err(|e| e.to_string())?;
        let want = scan_best(&runs);
        ensure(got == want, || format!("case {case}: select_best {got} vs scan {want}"))?;
    }
    ensure(select_best::<RunResult>(&[]).is_err(), || "empty list accepted".into())?;
    Ok(format!("100 lists agree with the scan ({ties} with metric ties); empty list rejected"))
}

// ---------------------------------------------------------------- service

async fn call(app: &axum::Router, method: &str, uri: &str, body: Value) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(if body.is_null() { Body::empty() } else { Body::from(body.to_string()) })
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn sse(app: &axum::Router, uri: &str) -> Vec<(String, String)> {
    let req = Request::builder().uri(uri).body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    String::from_utf8(bytes.to_vec())
        .unwrap()
        .split("\n\n")
        .filter_map(|block| {
            let mut event = String::new();
            let mut data = String::new();
            for line in block.lines() {
                if let Some(v) = line.strip_prefix("event:") {
                    event = v.trim().to_string();
                } else if let Some(v) = line.strip_prefix("data:") {
                    data.push_str(v.trim_start());
                }
            }
            (!event.is_empty()).then_some((event, data))
        })
        .collect()
}

fn parse_state(v: &Value) -> Option<SessionState> {
    serde_json::from_value(v["state"].clone()).ok()
}

fn close_under_finish(states: &BTreeSet<SessionState>) -> BTreeSet<SessionState> {
    let mut out = states.clone();
    for &s in states {
        if let Ok(n) = transition(s, Command::Finished) {
            out.insert(n);
        }
    }
    out
}

async fn stream_log_equivalence(app: &axum::Router, log_dir: &std::path::Path) -> Result<usize, String> {
    let overrides = json!({"seed": 5, "max_runs": 3});
    let (st, body) = call(app, "POST", "/sessions", overrides).await;
    ensure(st == StatusCode::CREATED, || format!("create returned {st}"))?;
    let id = body["session_id"].as_str().unwrap().to_string();
    let live = {
        let app = app.clone();
        let uri = format!("/sessions/{id}/events?from_seq=0");
        tokio::spawn(async move { sse(&app, &uri).await })
    };
    let (st, _) = call(app, "POST", &format!("/sessions/{id}/messages"), json!({"goal": "mix evenly"})).await;
    ensure(st == StatusCode::ACCEPTED, || format!("message returned {st}"))?;
    let streamed = live.await.map_err(|e| e.to_string())?;
    ensure(streamed.last().map(|e| e.0.as_str()) == Some("end"), || "stream did not end with an end marker".into())?;
    let streamed: Vec<EventRecord> = streamed[..streamed.len() - 1]
        .iter()
        .map(|(_, d)| serde_json::from_str(d).unwrap())
        .collect();
    let logged = read_jsonl_file(log_dir.join(format!("{id}.jsonl"))).map_err(|e| e.to_string())?;
    ensure(streamed == logged, || format!("streamed {} events, log has {}", streamed.len(), logged.len()))?;
    let tail = sse(app, &format!("/sessions/{id}/events?from_seq=7")).await;
    let tail: Vec<EventRecord> = tail
        .iter()
        .filter(|(e, _)| e != "end")
        .map(|(_, d)| serde_json::from_str(d).unwrap())
        .collect();
    ensure(tail == logged[7..], || "from_seq=7 tail differs from the log".into())?;
    Ok(logged.len())
}

#[derive(Debug, Clone, Copy)]
enum Req {
    Create,
    CreateInvalid,
    Message,
    MessageEmpty,
    Control(&'static str),
    Summary,
    UnknownSession,
}

async fn fuzz_sequence(app: &axum::Router, rng: &mut RandomSource) -> Result<(), String> {
    let pool = [
        Req::Message,
        Req::Message,
        Req::MessageEmpty,
        Req::Control("pause"),
        Req::Control("resume"),
        Req::Control("abort"),
        Req::Control("stir"),
        Req::Summary,
        Req::UnknownSession,
        Req::CreateInvalid,
    ];
    let (st, body) = call(app, "POST", "/sessions", json!({"max_runs": 1, "max_cycles_per_run": 4})).await;
    ensure(st == StatusCode::CREATED, || format!("create returned {st}"))?;
    let id = body["session_id"].as_str().unwrap().to_string();
    let mut states: BTreeSet<SessionState> = [SessionState::Idle].into();
    let steps = 1 + rng.below(8);
    for _ in 0..steps {
        let req = if rng.below(20) == 0 { Req::Create } else { pool[rng.below(pool.len())] };
        let (command, (st, body)) = match req {
            Req::Create => (None, call(app, "POST", "/sessions", Value::Null).await),
            Req::CreateInvalid => (None, call(app, "POST", "/sessions", json!({"metric_threshold": 9})).await),
            Req::Message => (
                Some(Command::Message),
                call(app, "POST", &format!("/sessions/{id}/messages"), json!({"goal": "mix"})).await,
            ),
            Req::MessageEmpty => (
                None,
                call(app, "POST", &format!("/sessions/{id}/messages"), json!({"goal": "  "})).await,
            ),
            Req::Control(action) => {
                let command = serde_json::from_value(json!(action)).ok().map(Command::Control);
                (
                    command,
                    call(app, "POST", &format!("/sessions/{id}/control"), json!({ "action": action })).await,
                )
            }
            Req::Summary => (None, call(app, "GET", &format!("/sessions/{id}/summary"), Value::Null).await),
            Req::UnknownSession => (None, call(app, "GET", "/sessions/nope/summary", Value::Null).await),
        };
        ensure(!st.is_server_error(), || format!("{req:?} returned {st}"))?;
        ensure(body.is_object(), || format!("{req:?} returned a non-JSON body"))?;
        let expected_plain = match req {
            Req::Create => StatusCode::CREATED,
            Req::CreateInvalid | Req::MessageEmpty => StatusCode::BAD_REQUEST,
            Req::Control(_) if command.is_none() => StatusCode::BAD_REQUEST,
            Req::UnknownSession => StatusCode::NOT_FOUND,
            Req::Summary => StatusCode::OK,
            _ => StatusCode::IM_A_TEAPOT,
        };
        states = close_under_finish(&states);
        match command {
            None => {
                ensure(st == expected_plain, || format!("{req:?} returned {st}, expected {expected_plain}"))?;
                if let Req::Summary = req {
                    let s = parse_state(&body).ok_or("summary without a defined state")?;
                    ensure(states.contains(&s), || format!("summary state {s:?} not in {states:?}"))?;
                    states = [s].into();
                }
            }
            Some(cmd) => {
                let next: BTreeSet<SessionState> = if st.is_success() {
                    let s = parse_state(&body).ok_or("response without a defined state")?;
                    states
                        .iter()
                        .filter_map(|&from| transition(from, cmd).ok())
                        .filter(|&n| n == s)
                        .collect()
                } else {
                    ensure(st == StatusCode::CONFLICT, || format!("{req:?} returned {st}"))?;
                    states.iter().copied().filter(|&from| transition(from, cmd).is_err()).collect()
                };
                ensure(!next.is_empty(), || {
                    format!("{req:?} -> {st} {body} is impossible from {states:?}")
                })?;
                states = next;
            }
        }
        states = close_under_finish(&states);
    }
    // release any paused worker
    call(app, "POST", &format!("/sessions/{id}/control"), json!({"action": "abort"})).await;
    Ok(())
}

fn service_contract() -> Check {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime.block_on(async {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let app = router(AppState::with_options(
            SessionConfig::default(),
            1 << 16,
            Some(dir.path().to_path_buf()),
        ));
        let events = stream_log_equivalence(&app, dir.path()).await?;
        let fuzz_app = router(AppState::new(SessionConfig::default()));
        let mut rng = RandomSource::new(2024);
        for i in 0..1000 {
            fuzz_sequence(&fuzz_app, &mut rng)
                .await
                .map_err(|e| format!("sequence {i}: {e}"))?;
        }
        Ok(format!(
            "{events} streamed events equal the log; 1000 random request sequences stayed within the state machine"
        ))
    })
}

// ---------------------------------------------------------------- driver

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("simulator property suite", Some(Duration::from_secs(10)), simulator_properties),
        ("metric oracle", Some(Duration::from_secs(1)), metric_oracle),
        ("shake dynamics", Some(Duration::from_secs(30)), shake_dynamics),
        ("offline end-to-end", Some(Duration::from_secs(60)), offline_end_to_end),
        ("golden-transcript replay", None, golden_replay),
        ("repair-loop contract", None, repair_loop),
        ("baseline vs oracle", None, baseline_vs_oracle),
        ("multi-run selection", None, multi_run_selection),
        ("service contract", None, service_contract),
    ];
    let mut failed = 0;
    for (name, limit, check) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let result = match (result, limit) {
            (Ok(_), Some(l)) if elapsed > l => Err(format!("took {elapsed:.2?}, limit {l:?}")),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS  {name}: {detail} [{elapsed:.2?}]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{elapsed:.2?}]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
