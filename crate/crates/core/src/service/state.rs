use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::ControlAction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    /// Created, waiting for a goal.
    Idle,
    Running,
    Paused,
    /// Last exploration finished; a new message starts another.
    Completed,
    Aborted,
}

impl SessionState {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionState::Idle => "idle",
            SessionState::Running => "running",
            SessionState::Paused => "paused",
            SessionState::Completed => "completed",
            SessionState::Aborted => "aborted",
        }
    }

    /// An exploration thread exists.
    pub fn is_active(self) -> bool {
        matches!(self, SessionState::Running | SessionState::Paused)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Message,
    Control(ControlAction),
    /// The exploration thread returned.
    Finished,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("{command:?} is not allowed while the session is {}", state.as_str())]
pub struct TransitionError {
    pub state: SessionState,
    pub command: Command,
}

/// Session lifecycle. Errors leave the state unchanged.
pub fn transition(state: SessionState, command: Command) -> Result<SessionState, TransitionError> {
    use ControlAction::*;
    use SessionState::*;
    let next = match (state, command) {
        (Idle | Completed, Command::Message) => Running,
        (Running, Command::Control(Pause)) | (Paused, Command::Control(Pause)) => Paused,
        (Running, Command::Control(Resume)) | (Paused, Command::Control(Resume)) => Running,
        (Idle | Running | Paused | Completed, Command::Control(Abort)) => Aborted,
        (Running | Paused, Command::Finished) => Completed,
        (Aborted, Command::Finished) => Aborted,
        _ => return Err(TransitionError { state, command }),
    };
    Ok(next)
}
