//! Observable steps of a conversation turn.

use std::sync::{Arc, Mutex};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::sandbox::ExecutionOutcome;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentEvent {
    /// Position in the session's event log, starting at 0.
    pub seq: u64,
    pub timestamp: String,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl AgentEvent {
    pub fn kind_name(&self) -> &'static str {
        self.kind.name()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueRecord {
    pub category: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventKind {
    IntentAssessed {
        decision: String,
        message: String,
        normalized_intent: Option<String>,
        clarification_question: Option<String>,
        reason: String,
    },
    ClarificationRequested {
        question: String,
        original_intent: String,
    },
    SqlAttempt {
        round: u32,
        attempt: u32,
        sql: Option<String>,
        note: Option<String>,
    },
    ExecutionResult {
        round: u32,
        attempt: u32,
        outcome: ExecutionOutcome,
    },
    Critique {
        round: u32,
        decision: String,
        issues: Vec<IssueRecord>,
    },
    FinalSql {
        sql: String,
        approved: bool,
        status: String,
    },
    Answer {
        text: String,
    },
    Error {
        stage: String,
        message: String,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::IntentAssessed { .. } => "intent_assessed",
            EventKind::ClarificationRequested { .. } => "clarification_requested",
            EventKind::SqlAttempt { .. } => "sql_attempt",
            EventKind::ExecutionResult { .. } => "execution_result",
            EventKind::Critique { .. } => "critique",
            EventKind::FinalSql { .. } => "final_sql",
            EventKind::Answer { .. } => "answer",
            EventKind::Error { .. } => "error",
        }
    }
}

/// Receives events as they are emitted.
pub trait EventSink: Send + Sync {
    fn record(&self, event: &AgentEvent);
}

/// Discards everything.
pub struct NullSink;

impl EventSink for NullSink {
    fn record(&self, _: &AgentEvent) {}
}

impl<F> EventSink for F
where
    F: Fn(&AgentEvent) + Send + Sync,
{
    fn record(&self, event: &AgentEvent) {
        self(event)
    }
}

/// Numbers, timestamps and forwards the events of one turn, keeping a copy.
#[derive(Clone)]
pub struct EventEmitter {
    inner: Arc<Mutex<EmitterState>>,
    sink: Arc<dyn EventSink>,
}

struct EmitterState {
    next_seq: u64,
    emitted: Vec<AgentEvent>,
}

impl EventEmitter {
    pub fn new(sink: Arc<dyn EventSink>, first_seq: u64) -> Self {
        EventEmitter { inner: Arc::new(Mutex::new(EmitterState { next_seq: first_seq, emitted: Vec::new() })), sink }
    }

    pub fn detached() -> Self {
        Self::new(Arc::new(NullSink), 0)
    }

    pub fn emit(&self, kind: EventKind) -> AgentEvent {
        let mut state = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        let event = AgentEvent {
            seq: state.next_seq,
            timestamp: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            kind,
        };
        state.next_seq += 1;
        self.sink.record(&event);
        state.emitted.push(event.clone());
        event
    }

    /// Events emitted so far, in order.
    pub fn events(&self) -> Vec<AgentEvent> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner()).emitted.clone()
    }

    pub fn kinds(&self) -> Vec<&'static str> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner()).emitted.iter().map(AgentEvent::kind_name).collect()
    }
}

/// Parses an RFC 3339 timestamp written by [`EventEmitter`].
pub fn parse_timestamp(text: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(text).ok().map(|t| t.with_timezone(&Utc))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn events_are_numbered_and_forwarded() {
        let seen = Arc::new(Mutex::new(Vec::new()));
        let sink_seen = seen.clone();
        let emitter = EventEmitter::new(Arc::new(move |e: &AgentEvent| sink_seen.lock().unwrap().push(e.seq)), 4);
        emitter.emit(EventKind::Answer { text: "a".into() });
        emitter.emit(EventKind::Error { stage: "x".into(), message: "y".into() });
        assert_eq!(*seen.lock().unwrap(), vec![4, 5]);
        assert_eq!(emitter.kinds(), ["answer", "error"]);
        let stamps: Vec<_> = emitter.events().iter().map(|e| parse_timestamp(&e.timestamp).unwrap()).collect();
        assert!(stamps[0] <= stamps[1]);
    }

    #[test]
    fn serialized_form_is_flat() {
        let event = AgentEvent {
            seq: 2,
            timestamp: "2025-01-01T00:00:00.000Z".into(),
            kind: EventKind::SqlAttempt { round: 1, attempt: 2, sql: Some("SELECT 1".into()), note: None },
        };
        let json = serde_json::to_value(&event).unwrap();
        assert_eq!(json["kind"], "sql_attempt");
        assert_eq!(json["payload"]["attempt"], 2);
        let back: AgentEvent = serde_json::from_value(json).unwrap();
        assert_eq!(back, event);
    }
}
