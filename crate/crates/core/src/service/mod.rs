//! Session lifecycle, durable transcripts and live event fan-out.

mod http;
mod store;

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;
use tokio::task::JoinHandle;

use crate::events::{AgentEvent, EventEmitter, EventKind, EventSink};
use crate::orchestrator::{Assistant, TurnReport};

pub use http::{router, serve};
pub use store::{LogRecord, LogWriter, SessionRecord, SessionStore, StoreError};

const STREAM_CAPACITY: usize = 1024;
pub const INTERRUPTED_REPLY: &str = "This turn was interrupted before it finished. Please send the message again.";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ServiceError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("a turn is already in progress for session {0}")]
    TurnInProgress(String),
    #[error("message text is empty")]
    EmptyMessage,
    #[error("storage failure: {0}")]
    StorageFailure(String),
}

impl From<StoreError> for ServiceError {
    fn from(err: StoreError) -> Self {
        match err {
            StoreError::UnknownSession(id) => ServiceError::UnknownSession(id),
            other => ServiceError::StorageFailure(other.to_string()),
        }
    }
}

/// Listing entry for a session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub created_at: String,
    pub title: Option<String>,
    pub turns: usize,
    pub busy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnCompletion {
    pub turn: usize,
    pub reply: String,
}

/// Item delivered to stream subscribers.
#[derive(Debug, Clone, PartialEq)]
pub enum StreamItem {
    Event(AgentEvent),
    TurnCompleted(TurnCompletion),
}

struct SessionLog {
    writer: LogWriter,
    view: SessionRecord,
    failure: Option<StoreError>,
}

impl SessionLog {
    fn write(&mut self, record: LogRecord) -> Result<(), StoreError> {
        self.writer.append(&record)?;
        self.view.apply(&record);
        Ok(())
    }
}

struct SessionHandle {
    log: Mutex<SessionLog>,
    busy: AtomicBool,
    stream: broadcast::Sender<StreamItem>,
}

impl SessionHandle {
    fn new(view: SessionRecord, writer: LogWriter) -> Arc<Self> {
        let (stream, _) = broadcast::channel(STREAM_CAPACITY);
        Arc::new(SessionHandle {
            log: Mutex::new(SessionLog { writer, view, failure: None }),
            busy: AtomicBool::new(false),
            stream,
        })
    }

    fn lock(&self) -> MutexGuard<'_, SessionLog> {
        self.log.lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// Persists each event, then broadcasts it.
struct PersistingSink(Arc<SessionHandle>);

impl EventSink for PersistingSink {
    fn record(&self, event: &AgentEvent) {
        let mut log = self.0.lock();
        match log.write(LogRecord::Event { event: event.clone() }) {
            Ok(()) => {
                let _ = self.0.stream.send(StreamItem::Event(event.clone()));
            }
            Err(err) => {
                tracing::error!(error = %err, "failed to persist event");
                log.failure.get_or_insert(err);
            }
        }
    }
}

struct BusyGuard(Arc<SessionHandle>);

impl Drop for BusyGuard {
    fn drop(&mut self) {
        self.0.busy.store(false, Ordering::Release);
    }
}

/// A started turn. `join` resolves once the reply is persisted.
#[derive(Debug)]
pub struct TurnHandle {
    pub turn: usize,
    pub first_seq: u64,
    pub join: JoinHandle<Result<TurnReport, ServiceError>>,
}

pub struct ChatService {
    assistant: Arc<Assistant>,
    store: SessionStore,
    sessions: Mutex<HashMap<String, Arc<SessionHandle>>>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl ChatService {
    pub fn new(assistant: Arc<Assistant>, store: SessionStore) -> Arc<Self> {
        Arc::new(ChatService { assistant, store, sessions: Mutex::new(HashMap::new()) })
    }

    pub fn assistant(&self) -> &Assistant {
        &self.assistant
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    pub fn schema_markdown(&self) -> &str {
        &self.assistant.schema().rendered
    }

    fn sessions(&self) -> MutexGuard<'_, HashMap<String, Arc<SessionHandle>>> {
        self.sessions.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn handle(&self, session_id: &str) -> Result<Arc<SessionHandle>, ServiceError> {
        let mut sessions = self.sessions();
        if let Some(handle) = sessions.get(session_id) {
            return Ok(handle.clone());
        }
        let (view, writer) = self.store.load(session_id)?;
        let interrupted = view.in_flight.is_some();
        let handle = SessionHandle::new(view, writer);
        if interrupted {
            close_interrupted(&handle)?;
        }
        sessions.insert(session_id.to_string(), handle.clone());
        Ok(handle)
    }

    pub fn create_session(&self) -> Result<SessionSummary, ServiceError> {
        let session_id = uuid::Uuid::new_v4().to_string();
        let (view, writer) = self.store.create(&session_id, &now())?;
        let summary = summarize(&view, false);
        self.sessions().insert(session_id, SessionHandle::new(view, writer));
        Ok(summary)
    }

    pub fn list_sessions(&self) -> Result<Vec<SessionSummary>, ServiceError> {
        let mut out = Vec::new();
        for (id, _) in self.store.list()? {
            let handle = self.handle(&id)?;
            let busy = handle.busy.load(Ordering::Acquire);
            out.push(summarize(&handle.lock().view, busy));
        }
        Ok(out)
    }

    pub fn transcript(&self, session_id: &str) -> Result<SessionRecord, ServiceError> {
        Ok(self.handle(session_id)?.lock().view.clone())
    }

    /// Snapshot of everything after `after` plus a receiver for what follows.
    /// Taken under the log lock so nothing is missed or repeated.
    pub fn subscribe(
        &self,
        session_id: &str,
        after: Option<u64>,
    ) -> Result<(Vec<StreamItem>, broadcast::Receiver<StreamItem>), ServiceError> {
        let handle = self.handle(session_id)?;
        let log = handle.lock();
        let receiver = handle.stream.subscribe();
        let newer = |e: &AgentEvent| after.is_none_or(|a| e.seq > a);
        let mut replay = Vec::new();
        for (index, turn) in log.view.state.turns.iter().enumerate() {
            replay.extend(turn.events.iter().filter(|e| newer(e)).cloned().map(StreamItem::Event));
            let fresh = match turn.events.last() {
                Some(last) => newer(last),
                None => after.is_none(),
            };
            if fresh {
                replay.push(StreamItem::TurnCompleted(TurnCompletion { turn: index, reply: turn.reply.clone() }));
            }
        }
        let consumed: usize = log.view.state.turns.iter().map(|t| t.events.len()).sum();
        replay.extend(log.view.events[consumed..].iter().filter(|e| newer(e)).cloned().map(StreamItem::Event));
        Ok((replay, receiver))
    }

    /// Starts a turn in the background.
    pub fn post_message(self: &Arc<Self>, session_id: &str, text: &str) -> Result<TurnHandle, ServiceError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(ServiceError::EmptyMessage);
        }
        let handle = self.handle(session_id)?;
        if handle.busy.compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire).is_err() {
            return Err(ServiceError::TurnInProgress(session_id.to_string()));
        }
        let guard = BusyGuard(handle.clone());
        let (turn, first_seq, mut state) = {
            let mut log = handle.lock();
            let turn = log.view.state.turns.len();
            let first_seq = log.view.events.len() as u64;
            log.write(LogRecord::TurnStarted { turn, message: text.to_string() })?;
            (turn, first_seq, log.view.state.clone())
        };

        let service = self.clone();
        let message = text.to_string();
        let join = tokio::spawn(async move {
            let _guard = guard;
            let events = EventEmitter::new(Arc::new(PersistingSink(handle.clone())), first_seq);
            let outcome = service.assistant.handle_turn(&mut state, &message, &events).await;
            let report = match outcome {
                Ok(report) => report,
                Err(err) => {
                    events.emit(EventKind::Error { stage: "orchestrator".into(), message: err.to_string() });
                    let reply = format!("Sorry, this turn failed: {err}");
                    events.emit(EventKind::Answer { text: reply.clone() });
                    TurnReport {
                        status: crate::orchestrator::TurnStatus::Failed,
                        reply,
                        assessment: None,
                        agent_status: None,
                        final_sql: None,
                        approved: false,
                        timed_out: false,
                    }
                }
            };
            complete_turn(&handle, turn, &report.reply, state.pending_clarification.clone())?;
            Ok(report)
        });
        Ok(TurnHandle { turn, first_seq, join })
    }
}

fn summarize(view: &SessionRecord, busy: bool) -> SessionSummary {
    SessionSummary {
        session_id: view.session_id.clone(),
        created_at: view.created_at.clone(),
        title: view.title.clone(),
        turns: view.state.turns.len(),
        busy,
    }
}

fn complete_turn(
    handle: &SessionHandle,
    turn: usize,
    reply: &str,
    pending_clarification: Option<crate::orchestrator::PendingClarification>,
) -> Result<(), ServiceError> {
    let mut log = handle.lock();
    if let Some(err) = log.failure.take() {
        return Err(err.into());
    }
    log.write(LogRecord::TurnCompleted { turn, reply: reply.to_string(), pending_clarification })?;
    log.writer.sync()?;
    let _ = handle.stream.send(StreamItem::TurnCompleted(TurnCompletion { turn, reply: reply.to_string() }));
    Ok(())
}

/// Closes a turn left open by a previous process.
fn close_interrupted(handle: &Arc<SessionHandle>) -> Result<(), ServiceError> {
    let (turn, first_seq, pending) = {
        let log = handle.lock();
        (log.view.state.turns.len(), log.view.events.len() as u64, log.view.state.pending_clarification.clone())
    };
    let events = EventEmitter::new(Arc::new(PersistingSink(handle.clone())), first_seq);
    events.emit(EventKind::Error { stage: "service".into(), message: "turn interrupted by a service restart".into() });
    events.emit(EventKind::Answer { text: INTERRUPTED_REPLY.into() });
    complete_turn(handle, turn, INTERRUPTED_REPLY, pending)
}
