//! Data and control interfaces of the twin without any agent.
//!
//! Pours three layers through wire-shaped function calls, shows the text
//! matrix an agent would read, and demonstrates a rejected call.
//!
//! ```bash
//! cargo run -p mixtwin --example text_interface
//! ```

use serde_json::json;

use mixtwin::sim::{Container, RandomSource, ShakeConfig};
use mixtwin::twin::{parse_text, FunctionRegistry, SimulationSnapshot};

fn main() {
    let registry = FunctionRegistry::default();
    let config = ShakeConfig::default();
    let mut rng = RandomSource::new(42);
    let mut container = Container::new(10, 10).expect("valid size");

    println!("available functions:\n{}\n", registry.render());

    let script = [
        json!({"function": "add_balls", "args": {"type": "H", "percent": 30}}),
        json!({"function": "add_balls", "args": {"type": "N", "percent": 30}}),
        json!({"function": "add_balls", "args": {"type": "L", "percent": 30}}),
        json!({"function": "shake", "args": {"times": 6}}),
        json!({"function": "add_balls", "args": {"type": "L", "percent": 20}}),
        json!({"function": "shake", "args": {"times": "many"}}),
    ];
    let mut shakes = 0;
    for (cycle, call) in script.iter().enumerate() {
        match registry.execute_value(call, &mut container, &config, &mut rng) {
            Ok((call, outcome)) => {
                if let mixtwin::twin::FunctionCall::Shake { times } = call {
                    shakes += times;
                }
                println!("{call} -> {outcome:?}");
            }
            Err(e) => println!("{call} rejected: {e}"),
        }
        let snap = SimulationSnapshot::capture(&container, 0, cycle as u32, shakes);
        println!("  degree {:.3} (normalized {:.3}), free cells {}", snap.metric.raw, snap.metric.normalized, snap.free_cells);
    }

    let snap = SimulationSnapshot::capture(&container, 0, script.len() as u32, shakes);
    println!("\n{}", snap.grid_text);
    let parsed = parse_text(&snap.grid_text).expect("rendered text parses");
    assert_eq!(parsed, container);
    println!("\ntext matrix parses back to the same grid");
}
