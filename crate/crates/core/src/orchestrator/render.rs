use thiserror::Error;

use super::events::{EventRecord, Stage};
use super::session::RunResult;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RenderError {
    #[error("run {0} does not appear in the log")]
    UnknownRun(u32),
}

/// Text frames of one run: the grid after every executed call.
pub fn render_run(records: &[EventRecord], run_index: u32) -> Result<String, RenderError> {
    let in_run: Vec<&EventRecord> = records
        .iter()
        .filter(|e| e.run_index == run_index && matches!(e.stage, Stage::Execution | Stage::Metric | Stage::RunSummary))
        .collect();
    if in_run.is_empty() {
        return Err(RenderError::UnknownRun(run_index));
    }
    let mut out = String::new();
    let mut label = String::new();
    for e in in_run {
        match e.stage {
            Stage::Execution => {
                label = e.payload["call"].to_string();
                if e.payload["status"] == "error" {
                    label.push_str(&format!(" rejected: {}", e.payload["error"].as_str().unwrap_or_default()));
                }
            }
            Stage::Metric => {
                out.push_str(&format!(
                    "run {} cycle {}: {}\ndegree of even distribution {:.4} (normalized {:.3}), shakes so far {}\n{}\n\n",
                    run_index,
                    e.cycle_index,
                    label,
                    e.payload["raw"].as_f64().unwrap_or_default(),
                    e.payload["normalized"].as_f64().unwrap_or_default(),
                    e.payload["shakes_so_far"],
                    e.payload["grid_text"].as_str().unwrap_or_default(),
                ));
            }
            _ => {
                if let Some(r) = RunResult::from_payload(&e.payload) {
                    out.push_str(&format!(
                        "run {} ended: {}, degree {:.4}, shakes {}\n{}\n",
                        r.run_index, r.terminal_status, r.final_metric.raw, r.total_shakes, r.control_plan.narrative
                    ));
                }
            }
        }
    }
    Ok(out)
}
