//! Drives the four agents one at a time with canned replies, including the
//! repair loop recovering from malformed output.
//!
//! ```bash
//! cargo run -p mixtwin --example scripted_agents
//! ```

use mixtwin::agents::{decide, observe, reason, AgentSettings, CycleContext, History, ScriptedBackend};
use mixtwin::sim::{BallType, Container, RandomSource};
use mixtwin::twin::{FunctionRegistry, SimulationSnapshot};

fn main() {
    let mut container = Container::new(10, 10).expect("valid size");
    let mut rng = RandomSource::new(5);
    container.add_balls(BallType::Heavy, 40, &mut rng).expect("fits");
    container.add_balls(BallType::Light, 40, &mut rng).expect("fits");
    let snapshot = SimulationSnapshot::capture(&container, 0, 2, 0);
    let ctx = CycleContext {
        goal: "mix the balls evenly",
        threshold: 2.2,
        snapshot: &snapshot,
        max_cycles: 30,
        feedback: None,
        previous_runs: "",
    };
    let settings = AgentSettings::default();
    let registry = FunctionRegistry::default();

    let backend = ScriptedBackend::new([
        r#"{"key_observations":["heavy layer under light layer"],"metric_value":0,"notable_patterns":["two bands"]}"#,
        r#"Here is my plan: {"analysis":"layers are separated","candidate_strategies":["shake 4 times","add normal balls"],"recommended":"shake 4 times"}"#,
        "Let's shake it!",
        r#"{"function":"shake","args":{"times":0}}"#,
        r#"{"function":"shake","args":{"times":4},"rationale":"break the bands"}"#,
    ]);

    let obs = observe(&ctx, &backend, &settings).expect("observation");
    println!("observation ({} call): {:?}", obs.backend_calls(), obs.output);
    let plan = reason(&ctx, &obs.output, &History::default(), &backend, &settings).expect("reasoning");
    println!("reasoning ({} call): {:?}", plan.backend_calls(), plan.output);
    let decision = decide(&ctx, &plan.output, &registry, &backend, &settings).expect("decision");
    println!("decision ({} calls after repairs): {}", decision.backend_calls(), decision.output.call);
    for (i, raw) in decision.raw_texts.iter().enumerate() {
        println!("  attempt {}: {raw}", i + 1);
    }
}
