//! HTTP front end: sessions, goal messages, live event streams (SSE),
//! run control and summaries.

mod state;

use std::collections::{HashMap, VecDeque};
use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, Weak};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::Notify;

use crate::orchestrator::{
    select_best, ControlAction, EventRecord, EventSink, JsonlWriter, RunResult, Session, SessionConfig, SessionControl,
    Stage,
};

pub use state::{transition, Command, SessionState, TransitionError};

/// Live events a subscriber may fall behind by before it is cut off.
pub const DEFAULT_SUBSCRIBER_BUFFER: usize = 1024;

struct Subscriber {
    queue: VecDeque<EventRecord>,
    overflowed: bool,
    notify: Arc<Notify>,
}

struct Entry {
    state: SessionState,
    control: SessionControl,
    session: Option<Session>,
    log: Vec<EventRecord>,
    subscribers: Vec<Weak<Mutex<Subscriber>>>,
    started: bool,
}

impl Entry {
    /// No further events will arrive until another message.
    fn quiescent(&self) -> bool {
        !self.state.is_active() && (self.started || self.state == SessionState::Aborted)
    }

    fn wake_all(&self) {
        for s in self.subscribers.iter().filter_map(Weak::upgrade) {
            s.lock().expect("subscriber lock").notify.notify_one();
        }
    }
}

type EntryRef = Arc<Mutex<Entry>>;

fn lock(entry: &EntryRef) -> std::sync::MutexGuard<'_, Entry> {
    entry.lock().expect("session entry lock poisoned")
}

struct StreamSink {
    entry: EntryRef,
    capacity: usize,
}

impl EventSink for StreamSink {
    fn record(&mut self, event: &EventRecord) -> std::io::Result<()> {
        let mut en = lock(&self.entry);
        en.log.push(event.clone());
        let capacity = self.capacity;
        en.subscribers.retain(|weak| {
            let Some(sub) = weak.upgrade() else { return false };
            let mut s = sub.lock().expect("subscriber lock");
            if s.queue.len() >= capacity {
                s.overflowed = true;
                s.notify.notify_one();
                return false;
            }
            s.queue.push_back(event.clone());
            s.notify.notify_one();
            true
        });
        Ok(())
    }
}

struct Inner {
    sessions: Mutex<HashMap<String, EntryRef>>,
    defaults: SessionConfig,
    buffer: usize,
    log_dir: Option<PathBuf>,
}

/// Shared server state.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(defaults: SessionConfig) -> Self {
        Self::with_options(defaults, DEFAULT_SUBSCRIBER_BUFFER, None)
    }

    /// `buffer` bounds each subscriber's backlog of live events; `log_dir`
    /// receives one `<session_id>.jsonl` per session.
    pub fn with_options(defaults: SessionConfig, buffer: usize, log_dir: Option<PathBuf>) -> Self {
        Self(Arc::new(Inner {
            sessions: Mutex::new(HashMap::new()),
            defaults,
            buffer: buffer.max(1),
            log_dir,
        }))
    }

    fn entry(&self, id: &str) -> Result<EntryRef, ApiError> {
        self.0
            .sessions
            .lock()
            .expect("sessions lock poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown session {id}")))
    }
}

#[derive(Debug)]
pub struct ApiError(pub StatusCode, pub String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({"error": self.1}))).into_response()
    }
}

impl From<TransitionError> for ApiError {
    fn from(e: TransitionError) -> Self {
        ApiError(StatusCode::CONFLICT, e.to_string())
    }
}

fn parse_body(body: &Bytes) -> Result<Value, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(Value::Null);
    }
    serde_json::from_slice(body).map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("invalid JSON body: {e}")))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/events", get(stream_events))
        .route("/sessions/{id}/control", post(control))
        .route("/sessions/{id}/summary", get(summary))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

async fn healthz() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

async fn create_session(State(app): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<Value>), ApiError> {
    let overrides = parse_body(&body)?;
    let config = app
        .0
        .defaults
        .clone()
        .with_overrides(&overrides)
        .map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?;
    let backend = config
        .backend
        .build()
        .map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?;
    let mut session =
        Session::new(config.clone(), backend).map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.to_string()))?;
    let id = session.id().to_string();
    if let Some(dir) = &app.0.log_dir {
        let writer = JsonlWriter::create(dir.join(format!("{id}.jsonl")))
            .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, format!("cannot create session log: {e}")))?;
        session.add_sink(Box::new(writer));
    }
    let entry = Arc::new(Mutex::new(Entry {
        state: SessionState::Idle,
        control: session.control(),
        session: None,
        log: Vec::new(),
        subscribers: Vec::new(),
        started: false,
    }));
    session.add_sink(Box::new(StreamSink {
        entry: Arc::clone(&entry),
        capacity: app.0.buffer,
    }));
    lock(&entry).session = Some(session);
    app.0
        .sessions
        .lock()
        .expect("sessions lock poisoned")
        .insert(id.clone(), entry);
    Ok((StatusCode::CREATED, Json(json!({"session_id": id, "config": config}))))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageBody {
    #[serde(alias = "text")]
    goal: String,
}

async fn post_message(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let entry = app.entry(&id)?;
    let msg: MessageBody = serde_json::from_value(parse_body(&body)?).map_err(|e| {
        ApiError(
            StatusCode::BAD_REQUEST,
            format!("expected {{\"goal\": string}}: {e}"),
        )
    })?;
    let goal = msg.goal.trim().to_string();
    if goal.is_empty() {
        return Err(ApiError(StatusCode::BAD_REQUEST, "goal must not be empty".into()));
    }
    let mut session = {
        let mut en = lock(&entry);
        let next = transition(en.state, Command::Message)?;
        let session = en.session.take().expect("idle session is parked in its entry");
        en.state = next;
        en.started = true;
        session
    };
    let worker_entry = Arc::clone(&entry);
    std::thread::spawn(move || {
        session.explore_goal(&goal);
        let mut en = lock(&worker_entry);
        en.session = Some(session);
        en.state = transition(en.state, Command::Finished).unwrap_or(en.state);
        en.wake_all();
    });
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({"session_id": id, "state": SessionState::Running})),
    ))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlBody {
    action: ControlAction,
}

async fn control(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let entry = app.entry(&id)?;
    let body: ControlBody = serde_json::from_value(parse_body(&body)?).map_err(|e| {
        ApiError(
            StatusCode::BAD_REQUEST,
            format!("expected {{\"action\": \"pause\"|\"resume\"|\"abort\"}}: {e}"),
        )
    })?;
    let mut en = lock(&entry);
    en.state = transition(en.state, Command::Control(body.action))?;
    en.control.apply(body.action);
    en.wake_all();
    Ok(Json(json!({"session_id": id, "state": en.state})))
}

async fn summary(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let entry = app.entry(&id)?;
    let en = lock(&entry);
    let runs: Vec<RunResult> = en
        .log
        .iter()
        .filter(|e| e.stage == Stage::RunSummary)
        .filter_map(|e| RunResult::from_payload(&e.payload))
        .collect();
    let best = select_best(&runs).ok().map(|i| runs[i].run_index);
    let last = en.log.iter().rev().find(|e| e.stage == Stage::ExplorationSummary);
    let goal = en.log.iter().rev().find(|e| e.stage == Stage::UserGoal);
    Ok(Json(json!({
        "session_id": id,
        "state": en.state,
        "goal": goal.map(|e| e.payload["goal"].clone()),
        "runs": runs,
        "best_run_index": best,
        "report": last.map(|e| e.payload["report"].clone()),
    })))
}

#[derive(Deserialize)]
struct EventsQuery {
    #[serde(default)]
    from_seq: u64,
}

fn record_event(e: &EventRecord) -> Event {
    Event::default()
        .id(e.seq.to_string())
        .event(e.stage.as_str())
        .data(serde_json::to_string(e).expect("event serializes"))
}

async fn stream_events(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let entry = app.entry(&id)?;
    let sub = {
        let mut en = lock(&entry);
        let sub = Arc::new(Mutex::new(Subscriber {
            queue: en.log.iter().filter(|e| e.seq >= q.from_seq).cloned().collect(),
            overflowed: false,
            notify: Arc::new(Notify::new()),
        }));
        en.subscribers.push(Arc::downgrade(&sub));
        sub
    };
    Ok(Sse::new(event_stream(entry, sub)).keep_alive(KeepAlive::default()))
}

enum Next {
    Record(EventRecord),
    Overflow,
    End(SessionState),
    Wait(Arc<Notify>),
}

fn next_item(entry: &EntryRef, sub: &Arc<Mutex<Subscriber>>) -> Next {
    // entry before subscriber, the same order the sink uses
    let en = lock(entry);
    let mut s = sub.lock().expect("subscriber lock");
    if let Some(e) = s.queue.pop_front() {
        return Next::Record(e);
    }
    if s.overflowed {
        return Next::Overflow;
    }
    if en.quiescent() {
        return Next::End(en.state);
    }
    Next::Wait(Arc::clone(&s.notify))
}

fn event_stream(entry: EntryRef, sub: Arc<Mutex<Subscriber>>) -> impl Stream<Item = Result<Event, Infallible>> {
    futures::stream::unfold(Some((entry, sub)), |st| async move {
        let (entry, sub) = st?;
        loop {
            match next_item(&entry, &sub) {
                Next::Record(e) => {
                    return Some((Ok(record_event(&e)), Some((entry, sub))));
                }
                Next::Overflow => {
                    let ev = Event::default().event("overflow").data(
                        json!({"message": "subscriber buffer overflowed; reconnect with from_seq to resume"})
                            .to_string(),
                    );
                    return Some((Ok(ev), None));
                }
                Next::End(state) => {
                    let ev = Event::default()
                        .event("end")
                        .data(json!({"state": state}).to_string());
                    return Some((Ok(ev), None));
                }
                Next::Wait(notify) => notify.notified().await,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quiescence() {
        let mut en = Entry {
            state: SessionState::Idle,
            control: SessionControl::default(),
            session: None,
            log: Vec::new(),
            subscribers: Vec::new(),
            started: false,
        };
        assert!(!en.quiescent());
        en.state = SessionState::Aborted;
        assert!(en.quiescent());
        en.state = SessionState::Running;
        en.started = true;
        assert!(!en.quiescent());
        en.state = SessionState::Completed;
        assert!(en.quiescent());
    }
}
