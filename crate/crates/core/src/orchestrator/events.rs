use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    UserGoal,
    Observation,
    Reasoning,
    Decision,
    Execution,
    Metric,
    RunSummary,
    ExplorationSummary,
    Error,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::UserGoal => "user_goal",
            Stage::Observation => "observation",
            Stage::Reasoning => "reasoning",
            Stage::Decision => "decision",
            Stage::Execution => "execution",
            Stage::Metric => "metric",
            Stage::RunSummary => "run_summary",
            Stage::ExplorationSummary => "exploration_summary",
            Stage::Error => "error",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One line of the session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    /// ISO-8601, UTC.
    pub timestamp: String,
    pub session_id: String,
    pub run_index: u32,
    pub cycle_index: u32,
    pub stage: Stage,
    pub payload: Value,
}

impl EventRecord {
    /// Equality on everything except the timestamp.
    pub fn same_content(&self, other: &EventRecord) -> bool {
        self.seq == other.seq
            && self.session_id == other.session_id
            && self.run_index == other.run_index
            && self.cycle_index == other.cycle_index
            && self.stage == other.stage
            && self.payload == other.payload
    }
}

pub fn utc_timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub trait EventSink: Send {
    fn record(&mut self, event: &EventRecord) -> io::Result<()>;
}

/// Writes one JSON object per line, flushed after every record.
pub struct JsonlWriter<W: Write + Send> {
    out: BufWriter<W>,
}

impl JsonlWriter<File> {
    pub fn create(path: impl AsRef<Path>) -> io::Result<Self> {
        Ok(Self::new(File::create(path)?))
    }
}

impl<W: Write + Send> JsonlWriter<W> {
    pub fn new(out: W) -> Self {
        Self {
            out: BufWriter::new(out),
        }
    }
}

impl<W: Write + Send> EventSink for JsonlWriter<W> {
    fn record(&mut self, event: &EventRecord) -> io::Result<()> {
        serde_json::to_writer(&mut self.out, event)?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("cannot read log: {0}")]
    Io(#[from] io::Error),
    #[error("log line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
}

pub fn read_jsonl(reader: impl BufRead) -> Result<Vec<EventRecord>, LogError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| LogError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn read_jsonl_file(path: impl AsRef<Path>) -> Result<Vec<EventRecord>, LogError> {
    read_jsonl(BufReader::new(File::open(path)?))
}

/// Append-only event log with monotonically increasing `seq` from 0.
pub struct EventLog {
    session_id: String,
    next_seq: u64,
    records: Vec<EventRecord>,
    sinks: Vec<Box<dyn EventSink>>,
    sink_error: Option<String>,
}

impl fmt::Debug for EventLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EventLog")
            .field("session_id", &self.session_id)
            .field("next_seq", &self.next_seq)
            .field("sinks", &self.sinks.len())
            .finish()
    }
}

impl EventLog {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            next_seq: 0,
            records: Vec::new(),
            sinks: Vec::new(),
            sink_error: None,
        }
    }

    pub fn add_sink(&mut self, sink: Box<dyn EventSink>) {
        self.sinks.push(sink);
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    /// First sink failure, if any. Later records are still kept in memory.
    pub fn sink_error(&self) -> Option<&str> {
        self.sink_error.as_deref()
    }

    pub fn append(&mut self, stage: Stage, run_index: u32, cycle_index: u32, payload: Value) -> u64 {
        let record = EventRecord {
            seq: self.next_seq,
            timestamp: utc_timestamp(),
            session_id: self.session_id.clone(),
            run_index,
            cycle_index,
            stage,
            payload,
        };
        self.next_seq += 1;
        for sink in &mut self.sinks {
            if let Err(e) = sink.record(&record) {
                self.sink_error.get_or_insert_with(|| e.to_string());
            }
        }
        self.records.push(record);
        self.next_seq - 1
    }
}
