use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlAction {
    Pause,
    Resume,
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Flag {
    Running,
    Paused,
    Aborted,
}

/// Pause/resume/abort switch shared between a session and its controller.
/// The session polls it at cycle boundaries.
#[derive(Debug, Clone)]
pub struct SessionControl {
    inner: Arc<(Mutex<Flag>, Condvar)>,
}

impl Default for SessionControl {
    fn default() -> Self {
        Self {
            inner: Arc::new((Mutex::new(Flag::Running), Condvar::new())),
        }
    }
}

impl SessionControl {
    /// Returns false once aborted. Abort wins over pause and is permanent.
    pub fn apply(&self, action: ControlAction) -> bool {
        let (lock, cvar) = &*self.inner;
        let mut flag = lock.lock().expect("control lock poisoned");
        *flag = match (*flag, action) {
            (Flag::Aborted, _) => Flag::Aborted,
            (_, ControlAction::Abort) => Flag::Aborted,
            (_, ControlAction::Pause) => Flag::Paused,
            (_, ControlAction::Resume) => Flag::Running,
        };
        cvar.notify_all();
        *flag != Flag::Aborted
    }

    pub fn pause(&self) {
        self.apply(ControlAction::Pause);
    }

    pub fn resume(&self) {
        self.apply(ControlAction::Resume);
    }

    pub fn abort(&self) {
        self.apply(ControlAction::Abort);
    }

    pub fn is_paused(&self) -> bool {
        *self.inner.0.lock().expect("control lock poisoned") == Flag::Paused
    }

    pub fn is_aborted(&self) -> bool {
        *self.inner.0.lock().expect("control lock poisoned") == Flag::Aborted
    }

    /// Blocks while paused. Returns false if the session should stop.
    pub fn checkpoint(&self) -> bool {
        let (lock, cvar) = &*self.inner;
        let flag = cvar
            .wait_while(lock.lock().expect("control lock poisoned"), |f| *f == Flag::Paused)
            .expect("control lock poisoned");
        *flag != Flag::Aborted
    }
}
