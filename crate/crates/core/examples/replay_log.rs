//! Records a session, replays it, then shows a one-byte edit being caught.
//!
//! ```bash
//! cargo run -p mixtwin --example replay_log
//! ```

use std::sync::Arc;

use mixtwin::agents::HeuristicBackend;
use mixtwin::orchestrator::{read_jsonl, render_run, replay, JsonlWriter, Session, SessionConfig};

fn main() {
    let path = std::env::temp_dir().join(format!("mixtwin-replay-{}.jsonl", std::process::id()));
    let config = SessionConfig {
        seed: 3,
        ..SessionConfig::default()
    };
    let mut session = Session::new(config, Arc::new(HeuristicBackend::default())).expect("valid config");
    session.add_sink(Box::new(JsonlWriter::create(&path).expect("log file")));
    session.explore();

    let text = std::fs::read_to_string(&path).expect("log written");
    let records = read_jsonl(text.as_bytes()).expect("log parses");
    let report = replay(&records).expect("faithful replay");
    println!("replayed {} events across {} runs", report.events_compared, report.runs);
    println!("{}", render_run(&records, 0).expect("run 0 exists").lines().take(14).collect::<Vec<_>>().join("\n"));

    let tampered = text.replacen("\"percent\\\":30", "\"percent\\\":20", 1);
    let edited = read_jsonl(tampered.as_bytes()).expect("still valid JSONL");
    match replay(&edited) {
        Ok(_) => println!("edit went unnoticed"),
        Err(e) => println!("\nafter editing one decision reply: {e}"),
    }
    let _ = std::fs::remove_file(&path);
}
