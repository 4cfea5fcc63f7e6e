use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::events::AgentEvent;
use crate::orchestrator::{ConversationState, PendingClarification, Turn};

const INDEX_FILE: &str = "sessions.jsonl";
const SESSION_DIR: &str = "sessions";
const TITLE_CHARS: usize = 60;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("corrupt log for session {session} at line {line}: {message}")]
    Corrupt { session: String, line: usize, message: String },
}

fn io_err(context: &Path, err: std::io::Error) -> StoreError {
    StoreError::StorageFailure(format!("{}: {err}", context.display()))
}

/// One line of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogRecord {
    Created { session_id: String, created_at: String },
    TurnStarted { turn: usize, message: String },
    Event { event: AgentEvent },
    TurnCompleted { turn: usize, reply: String, pending_clarification: Option<PendingClarification> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IndexEntry {
    session_id: String,
    created_at: String,
}

/// Everything persisted about a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub created_at: String,
    pub title: Option<String>,
    pub state: ConversationState,
    /// Every event of the session in emission order, including those of a
    /// turn still in progress.
    pub events: Vec<AgentEvent>,
    /// Message of a turn that started but has not completed.
    pub in_flight: Option<String>,
}

impl SessionRecord {
    fn new(session_id: String, created_at: String) -> Self {
        SessionRecord {
            state: ConversationState::new(session_id.clone()),
            session_id,
            created_at,
            title: None,
            events: Vec::new(),
            in_flight: None,
        }
    }

    /// Folds one log record into the view.
    pub fn apply(&mut self, record: &LogRecord) {
        match record {
            LogRecord::Created { .. } => {}
            LogRecord::TurnStarted { message, .. } => {
                if self.title.is_none() {
                    self.title = Some(make_title(message));
                }
                self.in_flight = Some(message.clone());
            }
            LogRecord::Event { event } => self.events.push(event.clone()),
            LogRecord::TurnCompleted { reply, pending_clarification, .. } => {
                let message = self.in_flight.take().unwrap_or_default();
                let consumed: usize = self.state.turns.iter().map(|t| t.events.len()).sum();
                let events = self.events[consumed.min(self.events.len())..].to_vec();
                self.state.turns.push(Turn { user_message: message, events, reply: reply.clone() });
                self.state.pending_clarification = pending_clarification.clone();
            }
        }
    }
}

fn make_title(message: &str) -> String {
    let trimmed = message.trim();
    match trimmed.char_indices().nth(TITLE_CHARS) {
        Some((idx, _)) => format!("{}…", &trimmed[..idx]),
        None => trimmed.to_string(),
    }
}

/// Directory of append-only session logs plus an index of sessions.
#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
}

impl SessionStore {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join(SESSION_DIR)).map_err(|e| io_err(&root, e))?;
        let index = root.join(INDEX_FILE);
        OpenOptions::new().create(true).append(true).open(&index).map_err(|e| io_err(&index, e))?;
        Ok(SessionStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn log_path(&self, session_id: &str) -> PathBuf {
        self.root.join(SESSION_DIR).join(format!("{session_id}.jsonl"))
    }

    /// Creates an empty session and returns its record and log writer.
    pub fn create(&self, session_id: &str, created_at: &str) -> Result<(SessionRecord, LogWriter), StoreError> {
        let path = self.log_path(session_id);
        let file = OpenOptions::new().create_new(true).append(true).open(&path).map_err(|e| io_err(&path, e))?;
        let mut writer = LogWriter { file, path };
        writer.append(&LogRecord::Created { session_id: session_id.into(), created_at: created_at.into() })?;

        let index = self.root.join(INDEX_FILE);
        let mut line = serde_json::to_string(&IndexEntry { session_id: session_id.into(), created_at: created_at.into() })
            .map_err(|e| StoreError::StorageFailure(e.to_string()))?;
        line.push('\n');
        OpenOptions::new()
            .append(true)
            .open(&index)
            .and_then(|mut f| f.write_all(line.as_bytes()))
            .map_err(|e| io_err(&index, e))?;
        Ok((SessionRecord::new(session_id.into(), created_at.into()), writer))
    }

    /// Session ids in creation order.
    pub fn list(&self) -> Result<Vec<(String, String)>, StoreError> {
        let index = self.root.join(INDEX_FILE);
        let file = File::open(&index).map_err(|e| io_err(&index, e))?;
        let mut out = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| io_err(&index, e))?;
            if line.trim().is_empty() {
                continue;
            }
            // a torn final line after a crash is skipped
            if let Ok(entry) = serde_json::from_str::<IndexEntry>(&line) {
                if self.log_path(&entry.session_id).exists() {
                    out.push((entry.session_id, entry.created_at));
                }
            }
        }
        Ok(out)
    }

    /// Rebuilds a session from its log. A torn final line is ignored.
    pub fn load(&self, session_id: &str) -> Result<(SessionRecord, LogWriter), StoreError> {
        if !valid_id(session_id) {
            return Err(StoreError::UnknownSession(session_id.into()));
        }
        let path = self.log_path(session_id);
        let text = match fs::read_to_string(&path) {
            Ok(text) => text,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(StoreError::UnknownSession(session_id.into()))
            }
            Err(e) => return Err(io_err(&path, e)),
        };
        let lines: Vec<&str> = text.split_inclusive('\n').collect();
        let mut record: Option<SessionRecord> = None;
        let mut valid_len = 0;
        for (i, line) in lines.iter().enumerate() {
            let parsed: Result<LogRecord, _> = serde_json::from_str(line.trim_end());
            let entry = match parsed {
                Ok(entry) if line.ends_with('\n') => entry,
                _ if i + 1 == lines.len() => break,
                Ok(_) => unreachable!("only the last line can lack a newline"),
                Err(e) => {
                    return Err(StoreError::Corrupt { session: session_id.into(), line: i + 1, message: e.to_string() })
                }
            };
            valid_len += line.len();
            match (&mut record, &entry) {
                (None, LogRecord::Created { session_id, created_at }) => {
                    record = Some(SessionRecord::new(session_id.clone(), created_at.clone()));
                }
                (None, _) => {
                    return Err(StoreError::Corrupt {
                        session: session_id.into(),
                        line: i + 1,
                        message: "log does not start with a created record".into(),
                    })
                }
                (Some(r), e) => r.apply(e),
            }
        }
        let record = record.ok_or_else(|| StoreError::Corrupt {
            session: session_id.into(),
            line: 1,
            message: "empty log".into(),
        })?;
        let file = OpenOptions::new().append(true).open(&path).map_err(|e| io_err(&path, e))?;
        if valid_len < text.len() {
            file.set_len(valid_len as u64).map_err(|e| io_err(&path, e))?;
        }
        Ok((record, LogWriter { file, path }))
    }
}

pub(crate) fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

/// Appends records to one session log; each record is written with a single
/// write call and flushed to the operating system before returning.
#[derive(Debug)]
pub struct LogWriter {
    file: File,
    path: PathBuf,
}

impl LogWriter {
    pub fn append(&mut self, record: &LogRecord) -> Result<(), StoreError> {
        let mut line = serde_json::to_string(record).map_err(|e| StoreError::StorageFailure(e.to_string()))?;
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(|e| io_err(&self.path, e))?;
        self.file.flush().map_err(|e| io_err(&self.path, e))
    }

    pub fn sync(&self) -> Result<(), StoreError> {
        self.file.sync_data().map_err(|e| io_err(&self.path, e))
    }
}
