//! Chat-completion backends.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable holding the remote API key.
pub const API_KEY_ENV: &str = "LLM_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    #[serde(rename = "content")]
    pub text: String,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        Self {
            role: ChatRole::System,
            text: text.into(),
        }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self {
            role: ChatRole::User,
            text: text.into(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: ChatRole::Assistant,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            max_tokens: 1024,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("scripted backend has no responses left")]
    ExhaustedScript,
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("backend request failed after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("unexpected backend response: {0}")]
    Response(String),
}

pub trait Backend: Send + Sync {
    /// Single request/response exchange; must not touch pipeline state.
    fn complete(&self, messages: &[ChatMessage], params: &GenerationParams) -> Result<String, BackendError>;

    fn name(&self) -> &str;
}

/// Checks the message contract, then forwards to the backend.
pub fn complete(
    backend: &dyn Backend,
    messages: &[ChatMessage],
    params: &GenerationParams,
) -> Result<String, BackendError> {
    let first = messages
        .first()
        .ok_or_else(|| BackendError::InvalidRequest("no messages".into()))?;
    if first.role != ChatRole::System {
        return Err(BackendError::InvalidRequest("first message must have role system".into()));
    }
    if let Some(m) = messages
        .iter()
        .find(|m| m.role != ChatRole::Assistant && m.text.is_empty())
    {
        return Err(BackendError::InvalidRequest(format!("empty {:?} message", m.role)));
    }
    backend.complete(messages, params)
}

/// Pops canned responses in order.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    queue: Mutex<VecDeque<String>>,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            queue: Mutex::new(responses.into_iter().map(Into::into).collect()),
            calls: AtomicUsize::new(0),
        }
    }

    /// Number of `complete` calls received, including failed ones.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().expect("poisoned").len()
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, _messages: &[ChatMessage], _params: &GenerationParams) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.queue
            .lock()
            .expect("poisoned")
            .pop_front()
            .ok_or(BackendError::ExhaustedScript)
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    pub timeout: Duration,
    pub max_retries: u32,
    /// First backoff delay; doubles per retry.
    pub backoff: Duration,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".into(),
            model: "gpt-4o-mini".into(),
            timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff: Duration::from_millis(500),
        }
    }
}

/// OpenAI-compatible `/chat/completions` client.
pub struct RemoteBackend {
    config: RemoteConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    message: CompletionMessage,
}

#[derive(Deserialize)]
struct CompletionMessage {
    content: Option<String>,
}

enum Attempt {
    Retry(String),
    Fatal(BackendError),
}

impl RemoteBackend {
    /// Reads the API key from `LLM_API_KEY` if set.
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_key(config, api_key)
    }

    pub fn with_key(config: RemoteConfig, api_key: Option<String>) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        Ok(Self {
            config,
            api_key,
            client,
        })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, body: &CompletionRequest<'_>) -> Result<String, Attempt> {
        let mut req = self.client.post(self.endpoint()).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(Attempt::Fatal(BackendError::Auth(status.to_string())));
        }
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(Attempt::Fatal(BackendError::Response(format!("HTTP {status}: {text}"))));
        }
        let parsed: CompletionResponse = resp
            .json()
            .map_err(|e| Attempt::Fatal(BackendError::Response(e.to_string())))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| Attempt::Fatal(BackendError::Response("no message content".into())))
    }
}

impl Backend for RemoteBackend {
    fn complete(&self, messages: &[ChatMessage], params: &GenerationParams) -> Result<String, BackendError> {
        let body = CompletionRequest {
            model: &self.config.model,
            messages,
            temperature: params.temperature,
            max_tokens: params.max_tokens,
        };
        let mut delay = self.config.backoff;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(message)) => {
                    if attempts > self.config.max_retries {
                        return Err(BackendError::Transport { attempts, message });
                    }
                    std::thread::sleep(delay);
                    delay *= 2;
                }
            }
        }
    }

    fn name(&self) -> &str {
        "remote"
    }
}
