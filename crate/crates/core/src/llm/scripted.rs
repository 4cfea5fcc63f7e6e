use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;

use super::{BackendReply, ChatBackend, ChatMessage, LlmError, Role, RoleConfig};

/// One canned backend behaviour.
#[derive(Debug, Clone, PartialEq)]
pub enum ScriptedReply {
    Text(String),
    /// Sleeps for `delay`, then answers. Lets tests exercise the gateway timeout.
    Stall { delay: Duration, text: String },
    /// Reports a timeout immediately, without waiting.
    Timeout,
    Unavailable(String),
}

impl ScriptedReply {
    pub fn text(text: impl Into<String>) -> Self {
        ScriptedReply::Text(text.into())
    }

    pub fn stall(delay: Duration, text: impl Into<String>) -> Self {
        ScriptedReply::Stall { delay, text: text.into() }
    }
}

impl From<&str> for ScriptedReply {
    fn from(s: &str) -> Self {
        ScriptedReply::Text(s.to_string())
    }
}

impl From<String> for ScriptedReply {
    fn from(s: String) -> Self {
        ScriptedReply::Text(s)
    }
}

/// A recorded call, for call-count and prompt assertions.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedCall {
    pub role: Role,
    /// Zero-based index of this call among calls for the same role.
    pub index: usize,
    pub messages: Vec<ChatMessage>,
}

#[derive(Debug, Default)]
struct State {
    queues: HashMap<Role, VecDeque<ScriptedReply>>,
    repeat: HashMap<Role, ScriptedReply>,
    counts: HashMap<Role, usize>,
    log: Vec<ScriptedCall>,
}

/// Deterministic stand-in for a model server.
///
/// Each role has its own queue, so the reply to a call is a function of
/// `(role, call index)` only. When a queue runs dry the role's repeat reply
/// is used, if set; otherwise the call fails with `BackendUnavailable`.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    state: Mutex<State>,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_script<I, R>(self, role: Role, replies: I) -> Self
    where
        I: IntoIterator<Item = R>,
        R: Into<ScriptedReply>,
    {
        for r in replies {
            self.push(role, r);
        }
        self
    }

    pub fn with_repeat(self, role: Role, reply: impl Into<ScriptedReply>) -> Self {
        self.state.lock().unwrap().repeat.insert(role, reply.into());
        self
    }

    pub fn push(&self, role: Role, reply: impl Into<ScriptedReply>) {
        self.state.lock().unwrap().queues.entry(role).or_default().push_back(reply.into());
    }

    pub fn calls(&self, role: Role) -> usize {
        self.state.lock().unwrap().counts.get(&role).copied().unwrap_or(0)
    }

    pub fn total_calls(&self) -> usize {
        self.state.lock().unwrap().log.len()
    }

    pub fn call_log(&self) -> Vec<ScriptedCall> {
        self.state.lock().unwrap().log.clone()
    }

    pub fn remaining(&self, role: Role) -> usize {
        self.state.lock().unwrap().queues.get(&role).map_or(0, VecDeque::len)
    }

    /// Loads scripts from a directory with one sub-directory per role.
    ///
    /// Files inside a role directory are replayed in file-name order. A file
    /// with extension `.timeout` replays as [`ScriptedReply::Timeout`], one
    /// with `.unavailable` as [`ScriptedReply::Unavailable`]. A file named
    /// `repeat.<ext>` becomes the role's repeat reply instead of a queue entry.
    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        let backend = ScriptedBackend::new();
        for role in Role::ALL {
            let role_dir = dir.join(role.as_str());
            if !role_dir.is_dir() {
                continue;
            }
            let mut files: Vec<_> = std::fs::read_dir(&role_dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            files.sort();
            for path in files {
                let reply = match path.extension().and_then(|e| e.to_str()) {
                    Some("timeout") => ScriptedReply::Timeout,
                    Some("unavailable") => ScriptedReply::Unavailable(std::fs::read_to_string(&path)?),
                    _ => ScriptedReply::Text(std::fs::read_to_string(&path)?),
                };
                let is_repeat = path.file_stem().and_then(|s| s.to_str()) == Some("repeat");
                let mut state = backend.state.lock().unwrap();
                if is_repeat {
                    state.repeat.insert(role, reply);
                } else {
                    state.queues.entry(role).or_default().push_back(reply);
                }
            }
        }
        Ok(backend)
    }

    fn next(&self, role: Role, messages: &[ChatMessage]) -> Option<ScriptedReply> {
        let mut state = self.state.lock().unwrap();
        let count = state.counts.entry(role).or_insert(0);
        let index = *count;
        *count += 1;
        state.log.push(ScriptedCall { role, index, messages: messages.to_vec() });
        match state.queues.get_mut(&role).and_then(VecDeque::pop_front) {
            Some(reply) => Some(reply),
            None => state.repeat.get(&role).cloned(),
        }
    }
}

#[async_trait]
impl ChatBackend for ScriptedBackend {
    async fn chat(&self, config: &RoleConfig, messages: &[ChatMessage]) -> Result<BackendReply, LlmError> {
        match self.next(config.role, messages) {
            Some(ScriptedReply::Text(text)) => Ok(BackendReply::text(text)),
            Some(ScriptedReply::Stall { delay, text }) => {
                tokio::time::sleep(delay).await;
                Ok(BackendReply::text(text))
            }
            Some(ScriptedReply::Timeout) => Err(LlmError::TimeoutExceeded { timeout: config.request_timeout }),
            Some(ScriptedReply::Unavailable(msg)) => Err(LlmError::BackendUnavailable(msg)),
            None => Err(LlmError::BackendUnavailable(format!("script for role {} exhausted", config.role))),
        }
    }
}
