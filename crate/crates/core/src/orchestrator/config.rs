use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agents::{
    AgentSettings, Backend, BackendError, GenerationParams, HeuristicBackend, RemoteBackend, RemoteConfig,
    ScriptedBackend, DEFAULT_MAX_REPAIRS,
};
use crate::sim::ShakeConfig;
use crate::twin::DEFAULT_MAX_SHAKE_PER_CALL;

pub const DEFAULT_GOAL: &str = "Please fill the container with balls to achieve an evenly distributed mixture";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value for {key}: {reason}")]
    Value { key: String, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error("config line {line}: {reason}")]
    Syntax { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Heuristic,
    Scripted,
    Remote,
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "heuristic" => Ok(BackendKind::Heuristic),
            "scripted" => Ok(BackendKind::Scripted),
            "remote" => Ok(BackendKind::Remote),
            other => Err(format!("unknown backend {other:?} (heuristic|scripted|remote)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub base_url: String,
    pub model: String,
    pub timeout_secs: u64,
    /// Responses for the scripted backend.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub script: Vec<String>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        let remote = RemoteConfig::default();
        Self {
            kind: BackendKind::Heuristic,
            base_url: remote.base_url,
            model: remote.model,
            timeout_secs: remote.timeout.as_secs(),
            script: Vec::new(),
        }
    }
}

impl BackendConfig {
    /// Instantiates the configured backend. The remote key comes from `LLM_API_KEY`.
    pub fn build(&self) -> Result<Arc<dyn Backend>, BackendError> {
        Ok(match self.kind {
            BackendKind::Heuristic => Arc::new(HeuristicBackend::default()),
            BackendKind::Scripted => Arc::new(ScriptedBackend::new(self.script.clone())),
            BackendKind::Remote => Arc::new(RemoteBackend::new(RemoteConfig {
                base_url: self.base_url.clone(),
                model: self.model.clone(),
                timeout: Duration::from_secs(self.timeout_secs),
                ..RemoteConfig::default()
            })?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub goal_text: String,
    /// Inclusive target on the raw metric scale.
    pub metric_threshold: f64,
    pub max_runs: u32,
    pub max_cycles_per_run: u32,
    pub seed: u64,
    pub shake_config: ShakeConfig,
    pub rows: usize,
    pub cols: usize,
    /// Stop exploring after the first successful run.
    pub early_stop: bool,
    pub max_repairs: u32,
    pub max_shake_per_call: u32,
    pub generation: GenerationParams,
    pub backend: BackendConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            goal_text: DEFAULT_GOAL.into(),
            metric_threshold: 2.2,
            max_runs: 10,
            max_cycles_per_run: 30,
            seed: 1,
            shake_config: ShakeConfig::default(),
            rows: 10,
            cols: 10,
            early_stop: true,
            max_repairs: DEFAULT_MAX_REPAIRS,
            max_shake_per_call: DEFAULT_MAX_SHAKE_PER_CALL,
            generation: GenerationParams::default(),
            backend: BackendConfig::default(),
        }
    }
}

fn as_u64(key: &str, v: &Value) -> Result<u64, ConfigError> {
    v.as_u64()
        .or_else(|| v.as_str().and_then(|s| s.parse().ok()))
        .ok_or_else(|| ConfigError::Value {
            key: key.into(),
            reason: format!("expected a non-negative integer, got {v}"),
        })
}

fn as_f64(key: &str, v: &Value) -> Result<f64, ConfigError> {
    v.as_f64()
        .or_else(|| v.as_str().and_then(|s| s.parse().ok()))
        .ok_or_else(|| ConfigError::Value {
            key: key.into(),
            reason: format!("expected a number, got {v}"),
        })
}

fn as_bool(key: &str, v: &Value) -> Result<bool, ConfigError> {
    v.as_bool()
        .or_else(|| v.as_str().and_then(|s| s.parse().ok()))
        .ok_or_else(|| ConfigError::Value {
            key: key.into(),
            reason: format!("expected true or false, got {v}"),
        })
}

fn as_string(key: &str, v: &Value) -> Result<String, ConfigError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(ConfigError::Value {
            key: key.into(),
            reason: format!("expected a string, got {other}"),
        }),
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_runs == 0 || self.max_cycles_per_run == 0 {
            return Err(ConfigError::Invalid("max_runs and max_cycles_per_run must be at least 1".into()));
        }
        if !(self.metric_threshold > 0.0 && self.metric_threshold <= 3.0) {
            return Err(ConfigError::Invalid(format!(
                "metric_threshold must lie in (0, 3], got {}",
                self.metric_threshold
            )));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(ConfigError::Invalid("rows and cols must be at least 1".into()));
        }
        if self.max_shake_per_call == 0 {
            return Err(ConfigError::Invalid("max_shake_per_call must be at least 1".into()));
        }
        if self.generation.temperature.is_nan() || self.generation.temperature < 0.0 {
            return Err(ConfigError::Invalid("temperature must be non-negative".into()));
        }
        self.shake_config.validate().map_err(ConfigError::Invalid)
    }

    pub fn agent_settings(&self) -> AgentSettings {
        AgentSettings {
            params: self.generation,
            max_repairs: self.max_repairs,
        }
    }

    /// Sets one flat key. Strings are accepted for numeric keys so that the
    /// same path serves JSON bodies and `key=value` files.
    pub fn set(&mut self, key: &str, value: &Value) -> Result<(), ConfigError> {
        match key {
            "goal" | "goal_text" => self.goal_text = as_string(key, value)?,
            "metric_threshold" | "threshold" => self.metric_threshold = as_f64(key, value)?,
            "max_runs" => self.max_runs = as_u64(key, value)? as u32,
            "max_cycles_per_run" => self.max_cycles_per_run = as_u64(key, value)? as u32,
            "seed" => self.seed = as_u64(key, value)?,
            "p_gap1" => self.shake_config.p_gap1 = as_f64(key, value)?,
            "p_gap2" => self.shake_config.p_gap2 = as_f64(key, value)?,
            "rows" => self.rows = as_u64(key, value)? as usize,
            "cols" => self.cols = as_u64(key, value)? as usize,
            "early_stop" => self.early_stop = as_bool(key, value)?,
            "max_repairs" => self.max_repairs = as_u64(key, value)? as u32,
            "max_shake_per_call" => self.max_shake_per_call = as_u64(key, value)? as u32,
            "temperature" => self.generation.temperature = as_f64(key, value)?,
            "max_tokens" => self.generation.max_tokens = as_u64(key, value)? as u32,
            "backend" => {
                self.backend.kind = as_string(key, value)?
                    .parse()
                    .map_err(|reason| ConfigError::Value { key: key.into(), reason })?
            }
            "base_url" => self.backend.base_url = as_string(key, value)?,
            "model" => self.backend.model = as_string(key, value)?,
            "timeout_secs" => self.backend.timeout_secs = as_u64(key, value)?,
            "script" => {
                let items = value.as_array().ok_or_else(|| ConfigError::Value {
                    key: key.into(),
                    reason: "expected an array of strings".into(),
                })?;
                self.backend.script = items
                    .iter()
                    .map(|v| as_string(key, v))
                    .collect::<Result<_, _>>()?;
            }
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    /// Applies a JSON object of overrides and validates the result.
    pub fn with_overrides(mut self, overrides: &Value) -> Result<Self, ConfigError> {
        match overrides {
            Value::Null => {}
            Value::Object(map) => {
                for (k, v) in map {
                    self.set(k, v)?;
                }
            }
            other => return Err(ConfigError::Invalid(format!("overrides must be a JSON object, got {other}"))),
        }
        self.validate()?;
        Ok(self)
    }

    /// Applies a flat `key=value` text file. `#` starts a comment line.
    pub fn with_file_text(mut self, text: &str) -> Result<Self, ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                reason: "expected key=value".into(),
            })?;
            self.set(key.trim(), &Value::String(value.trim().to_string()))?;
        }
        self.validate()?;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn empty_overrides_keep_defaults() {
        let cfg = SessionConfig::default().with_overrides(&json!({})).unwrap();
        assert_eq!(cfg, SessionConfig::default());
    }

    #[test]
    fn threshold_override_and_bound() {
        let cfg = SessionConfig::default()
            .with_overrides(&json!({"metric_threshold": 2.0}))
            .unwrap();
        assert_eq!(cfg.metric_threshold, 2.0);
        assert!(SessionConfig::default()
            .with_overrides(&json!({"metric_threshold": 5.0}))
            .is_err());
        assert!(SessionConfig::default()
            .with_overrides(&json!({"metric_threshold": 0.0}))
            .is_err());
    }

    #[test]
    fn unknown_key_rejected() {
        assert_eq!(
            SessionConfig::default().with_overrides(&json!({"colour": "red"})),
            Err(ConfigError::UnknownKey("colour".into()))
        );
    }

    #[test]
    fn file_text() {
        let text = "# session\nseed = 7\nthreshold=2.4\nbackend=remote\nmodel = llama\np_gap1=0.2\nearly_stop=false\n";
        let cfg = SessionConfig::default().with_file_text(text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.metric_threshold, 2.4);
        assert_eq!(cfg.backend.kind, BackendKind::Remote);
        assert_eq!(cfg.backend.model, "llama");
        assert_eq!(cfg.shake_config.p_gap1, 0.2);
        assert!(!cfg.early_stop);
        assert!(matches!(
            SessionConfig::default().with_file_text("seed"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(SessionConfig::default().with_file_text("p_gap1=0.9").is_err());
    }
}
