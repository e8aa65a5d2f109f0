use std::fs;
use std::io::{self, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use mixtwin::bench::{run_bench, write_csv, BenchConfig, Strategy};
use mixtwin::orchestrator::{
    read_jsonl_file, render_run, replay, BackendKind, JsonlWriter, Session, SessionConfig,
};
use mixtwin::service::{serve, AppState};

#[derive(Parser)]
#[command(name = "mixtwin", version, about = "Agent-driven experiments on a container-mixing digital twin")]
struct Cli {
    /// Flat key=value file applied before command-line flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one exploration and print the report.
    Run {
        #[arg(long)]
        goal: Option<String>,
        #[arg(long, value_parser = ["heuristic", "scripted", "remote"])]
        backend: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_runs: Option<u32>,
        #[arg(long)]
        threshold: Option<f64>,
        /// JSONL event log destination.
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON array of replies for the scripted backend.
        #[arg(long)]
        script: Option<PathBuf>,
    },
    /// Re-execute a session log and check it reproduces exactly.
    Replay { path: PathBuf },
    /// Print the grid frames of one run from a session log.
    Render {
        path: PathBuf,
        #[arg(long)]
        run: u32,
    },
    /// Compare the agent pipeline with random search and hill climbing.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "heuristic,random,hillclimb")]
        strategies: Vec<Strategy>,
        #[arg(long, default_value_t = 5)]
        trials: u32,
        #[arg(long, default_value_t = 5)]
        seeds: u32,
        /// CSV destination; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
        /// Directory for per-session JSONL logs.
        #[arg(long)]
        log_dir: Option<PathBuf>,
    },
}

fn base_config(path: Option<&PathBuf>) -> Result<SessionConfig> {
    let config = SessionConfig::default();
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(config.with_file_text(&text)?)
        }
        None => Ok(config),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let mut config = base_config(cli.config.as_ref())?;
    match cli.command {
        Cmd::Run {
            goal,
            backend,
            seed,
            max_runs,
            threshold,
            out,
            script,
        } => {
            if let Some(g) = goal {
                config.goal_text = g;
            }
            if let Some(b) = backend {
                config.backend.kind = b.parse().map_err(anyhow::Error::msg)?;
            }
            if let Some(s) = seed {
                config.seed = s;
            }
            if let Some(n) = max_runs {
                config.max_runs = n;
            }
            if let Some(t) = threshold {
                config.metric_threshold = t;
            }
            if let Some(p) = script {
                let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                config.backend.script = serde_json::from_str(&text).context("script must be a JSON array of strings")?;
            }
            if config.backend.kind == BackendKind::Scripted && config.backend.script.is_empty() {
                bail!("the scripted backend needs --script <file>");
            }
            config.validate()?;
            let backend = config.backend.build()?;
            let mut session = Session::new(config, backend)?;
            if let Some(p) = &out {
                let writer = JsonlWriter::create(p).with_context(|| format!("creating {}", p.display()))?;
                session.add_sink(Box::new(writer));
            }
            let result = session.explore();
            if let Some(e) = session.log().sink_error() {
                bail!("event log write failed: {e}");
            }
            print!("{}", result.report);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Replay { path } => {
            let records = read_jsonl_file(&path)?;
            match replay(&records) {
                Ok(report) => {
                    println!(
                        "replay ok: {} events, {} runs, {} explorations reproduced",
                        report.events_compared, report.runs, report.explorations
                    );
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    eprintln!("replay failed: {e}");
                    Ok(ExitCode::FAILURE)
                }
            }
        }
        Cmd::Render { path, run } => {
            let records = read_jsonl_file(&path)?;
            print!("{}", render_run(&records, run)?);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Bench {
            strategies,
            trials,
            seeds,
            out,
        } => {
            let mut bench = BenchConfig {
                strategies,
                trials,
                seeds,
                ..BenchConfig::default()
            };
            bench.space.shake_config = config.shake_config;
            let rows = run_bench(&bench)?;
            match out {
                Some(p) => write_csv(&rows, fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?)?,
                None => {
                    write_csv(&rows, io::stdout().lock())?;
                    io::stdout().flush()?;
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Serve { port, host, log_dir } => {
            if let Some(dir) = &log_dir {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            let addr = SocketAddr::new(host, port);
            let state = AppState::with_options(config, mixtwin::service::DEFAULT_SUBSCRIBER_BUFFER, log_dir);
            let runtime = tokio::runtime::Runtime::new()?;
            eprintln!("listening on http://{addr}");
            runtime.block_on(serve(addr, state))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}
