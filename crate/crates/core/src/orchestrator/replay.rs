use std::sync::Arc;

use thiserror::Error;

use super::config::SessionConfig;
use super::events::{EventRecord, Stage};
use super::session::Session;
use crate::agents::ScriptedBackend;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReplayError {
    #[error("log does not start with a user_goal event carrying the session config")]
    MissingConfig,
    #[error("recorded config is invalid: {0}")]
    BadConfig(String),
    #[error("exploration ending at seq {seq} was aborted and cannot be replayed")]
    Aborted { seq: u64 },
    #[error("replay diverges at seq {seq}: {detail}")]
    Divergence { seq: u64, detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub events_compared: usize,
    pub explorations: usize,
    pub runs: usize,
}

fn differing_fields(want: &EventRecord, got: &EventRecord) -> String {
    match (want.payload.as_object(), got.payload.as_object()) {
        (Some(a), Some(b)) => {
            let keys: std::collections::BTreeSet<&String> = a.keys().chain(b.keys()).collect();
            let diff: Vec<&str> = keys
                .into_iter()
                .filter(|k| a.get(*k) != b.get(*k))
                .map(String::as_str)
                .collect();
            diff.join(", ")
        }
        _ => "payload".into(),
    }
}

fn describe(record: Option<&EventRecord>) -> String {
    match record {
        Some(e) => format!("{} (run {}, cycle {})", e.stage, e.run_index, e.cycle_index),
        None => "end of log".into(),
    }
}

/// Re-executes a completed session log with its recorded agent replies and
/// checks that every record except the timestamp comes out identical.
pub fn replay(records: &[EventRecord]) -> Result<ReplayReport, ReplayError> {
    let Some(first) = records.first() else {
        return Ok(ReplayReport {
            events_compared: 0,
            explorations: 0,
            runs: 0,
        });
    };
    if first.stage != Stage::UserGoal {
        return Err(ReplayError::MissingConfig);
    }
    let config: SessionConfig = serde_json::from_value(first.payload.get("config").cloned().ok_or(ReplayError::MissingConfig)?)
        .map_err(|e| ReplayError::BadConfig(e.to_string()))?;
    if let Some(e) = records
        .iter()
        .find(|e| e.stage == Stage::ExplorationSummary && e.payload["status"] == "aborted")
    {
        return Err(ReplayError::Aborted { seq: e.seq });
    }

    let replies: Vec<String> = records
        .iter()
        .filter_map(|e| e.payload.get("raw_texts")?.as_array().cloned())
        .flatten()
        .filter_map(|v| v.as_str().map(str::to_string))
        .collect();
    let mut session = Session::with_id(
        first.session_id.clone(),
        config,
        Arc::new(ScriptedBackend::new(replies)),
    )
    .map_err(|e| ReplayError::BadConfig(e.to_string()))?;

    let goals: Vec<String> = records
        .iter()
        .filter(|e| e.stage == Stage::UserGoal)
        .map(|e| e.payload["goal"].as_str().unwrap_or_default().to_string())
        .collect();
    for goal in &goals {
        session.explore_goal(goal);
    }

    let produced = session.log().records();
    for (want, got) in records.iter().zip(produced) {
        if !want.same_content(got) {
            return Err(ReplayError::Divergence {
                seq: want.seq,
                detail: if (want.stage, want.run_index, want.cycle_index) == (got.stage, got.run_index, got.cycle_index) {
                    format!("{} payload differs in {}", describe(Some(want)), differing_fields(want, got))
                } else {
                    format!("recorded {} but replay produced {}", describe(Some(want)), describe(Some(got)))
                },
            });
        }
    }
    if records.len() != produced.len() {
        let n = records.len().min(produced.len());
        return Err(ReplayError::Divergence {
            seq: records.get(n).or(produced.get(n)).map_or(n as u64, |e| e.seq),
            detail: format!(
                "recorded {} but replay produced {}",
                describe(records.get(n)),
                describe(produced.get(n))
            ),
        });
    }
    Ok(ReplayReport {
        events_compared: records.len(),
        explorations: goals.len(),
        runs: session.runs().len(),
    })
}
