//! A full exploration with the offline heuristic backend, logged to JSONL.
//!
//! ```bash
//! cargo run -p mixtwin --example offline_session -- [seed] [log.jsonl]
//! ```

use std::sync::Arc;

use mixtwin::agents::HeuristicBackend;
use mixtwin::orchestrator::{JsonlWriter, Session, SessionConfig, Stage};

fn main() {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let config = SessionConfig {
        seed,
        ..SessionConfig::default()
    };
    let mut session = Session::new(config, Arc::new(HeuristicBackend::default())).expect("default config is valid");
    if let Some(path) = args.next() {
        session.add_sink(Box::new(JsonlWriter::create(&path).expect("log file")));
        println!("logging to {path}");
    }

    let result = session.explore();
    for e in session.log().records().iter().filter(|e| e.stage == Stage::Execution) {
        println!("run {} cycle {}: {}", e.run_index, e.cycle_index, e.payload["call"]);
    }
    println!();
    print!("{}", result.report);
}
