//! One exploration against an OpenAI-compatible chat endpoint.
//!
//! The key is read from `LLM_API_KEY`; without it the example only prints
//! what it would do.
//!
//! ```bash
//! LLM_API_KEY=... cargo run -p mixtwin --example remote_backend -- https://api.example.com/v1 model-name
//! ```

use mixtwin::orchestrator::{BackendKind, Session, SessionConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let mut config = SessionConfig {
        max_runs: 2,
        ..SessionConfig::default()
    };
    config.backend.kind = BackendKind::Remote;
    if let Some(url) = args.next() {
        config.backend.base_url = url;
    }
    if let Some(model) = args.next() {
        config.backend.model = model;
    }
    if std::env::var("LLM_API_KEY").map_or(true, |k| k.is_empty()) {
        println!(
            "LLM_API_KEY is not set; would query {} with model {}",
            config.backend.base_url, config.backend.model
        );
        return;
    }
    let backend = match config.backend.build() {
        Ok(b) => b,
        Err(e) => {
            eprintln!("cannot build backend: {e}");
            std::process::exit(1);
        }
    };
    let mut session = Session::new(config, backend).expect("valid config");
    print!("{}", session.explore().report);
}
