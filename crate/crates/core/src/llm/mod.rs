//! Chat-completion access for the agents.
//!
//! Every model call goes through [`Gateway::complete`], which resolves the
//! [`RoleConfig`] for the calling role, enforces the context budget before the
//! request leaves the process and bounds the call by the role's request
//! timeout. Backends are pluggable: [`HttpChatBackend`] talks to any
//! chat-completions server (Ollama, vLLM, llama.cpp), [`ScriptedBackend`]
//! replays canned completions and is what the test suites run against.

mod http;
mod scripted;

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::HttpChatBackend;
pub use scripted::{ScriptedBackend, ScriptedCall, ScriptedReply};

/// Context window assumed for every role unless configured otherwise.
pub const DEFAULT_CONTEXT_WINDOW: usize = 65_536;
/// Longest a single completion may take before the attempt is abandoned.
pub const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_secs(180);
pub const DEFAULT_MAX_OUTPUT_TOKENS: usize = 4_096;
/// Divisor used by [`estimate_tokens`].
pub const CHARS_PER_TOKEN: usize = 4;

/// The agent roles that talk to a model. Each resolves to its own model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Dialogue,
    Reasoner,
    Critic,
    Extractor,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Dialogue, Role::Reasoner, Role::Critic, Role::Extractor];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Dialogue => "dialogue",
            Role::Reasoner => "reasoner",
            Role::Critic => "critic",
            Role::Extractor => "extractor",
        }
    }

    pub fn parse(name: &str) -> Option<Role> {
        Role::ALL.into_iter().find(|r| r.as_str() == name)
    }

    fn default_temperature(self) -> f32 {
        match self {
            Role::Reasoner | Role::Critic => 0.2,
            Role::Extractor => 0.0,
            Role::Dialogue => 0.7,
        }
    }

    fn default_model(self) -> &'static str {
        match self {
            Role::Extractor => "llama3.1:8b",
            _ => "qwen2.5:32b",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleConfig {
    pub role: Role,
    pub model_id: String,
    pub context_window_tokens: usize,
    #[serde(with = "duration_secs")]
    pub request_timeout: Duration,
    pub temperature: f32,
    pub max_output_tokens: usize,
}

impl RoleConfig {
    pub fn default_for(role: Role) -> Self {
        RoleConfig {
            role,
            model_id: role.default_model().to_string(),
            context_window_tokens: DEFAULT_CONTEXT_WINDOW,
            request_timeout: DEFAULT_REQUEST_TIMEOUT,
            temperature: role.default_temperature(),
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.model_id.trim().is_empty() {
            return Err(LlmError::InvalidRequest(format!("{}: empty model id", self.role)));
        }
        if self.context_window_tokens == 0 {
            return Err(LlmError::InvalidRequest(format!("{}: context window must be >= 1", self.role)));
        }
        if self.request_timeout.is_zero() {
            return Err(LlmError::InvalidRequest(format!("{}: request timeout must be > 0", self.role)));
        }
        if self.max_output_tokens == 0 {
            return Err(LlmError::InvalidRequest(format!("{}: max output tokens must be >= 1", self.role)));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(LlmError::InvalidRequest(format!("{}: temperature must be >= 0", self.role)));
        }
        Ok(())
    }
}

/// One [`RoleConfig`] per role. Resolution is total by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RoleTable {
    dialogue: RoleConfig,
    reasoner: RoleConfig,
    critic: RoleConfig,
    extractor: RoleConfig,
}

impl Default for RoleTable {
    fn default() -> Self {
        RoleTable {
            dialogue: RoleConfig::default_for(Role::Dialogue),
            reasoner: RoleConfig::default_for(Role::Reasoner),
            critic: RoleConfig::default_for(Role::Critic),
            extractor: RoleConfig::default_for(Role::Extractor),
        }
    }
}

impl RoleTable {
    pub fn resolve(&self, role: Role) -> &RoleConfig {
        match role {
            Role::Dialogue => &self.dialogue,
            Role::Reasoner => &self.reasoner,
            Role::Critic => &self.critic,
            Role::Extractor => &self.extractor,
        }
    }

    fn slot_mut(&mut self, role: Role) -> &mut RoleConfig {
        match role {
            Role::Dialogue => &mut self.dialogue,
            Role::Reasoner => &mut self.reasoner,
            Role::Critic => &mut self.critic,
            Role::Extractor => &mut self.extractor,
        }
    }

    /// Replaces the configuration of `config.role`.
    pub fn set(&mut self, config: RoleConfig) -> Result<(), LlmError> {
        config.validate()?;
        let role = config.role;
        *self.slot_mut(role) = config;
        Ok(())
    }

    pub fn update(&mut self, role: Role, f: impl FnOnce(&mut RoleConfig)) -> Result<(), LlmError> {
        let mut next = self.resolve(role).clone();
        f(&mut next);
        next.role = role;
        self.set(next)
    }

    /// Applies the same request timeout to all roles.
    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        for role in Role::ALL {
            self.slot_mut(role).request_timeout = timeout;
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Author {
    System,
    User,
    Assistant,
}

impl Author {
    pub fn as_str(self) -> &'static str {
        match self {
            Author::System => "system",
            Author::User => "user",
            Author::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub author: Author,
    pub content: String,
}

impl ChatMessage {
    pub fn new(author: Author, content: impl Into<String>) -> Self {
        ChatMessage { author, content: content.into() }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Author::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Author::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Author::Assistant, content)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCounts {
    pub prompt: u64,
    pub output: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub text: String,
    pub model_id: String,
    pub latency: Duration,
    pub token_counts: Option<TokenCounts>,
}

/// What a backend hands back before the gateway adds timing metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendReply {
    pub text: String,
    pub token_counts: Option<TokenCounts>,
}

impl BackendReply {
    pub fn text(text: impl Into<String>) -> Self {
        BackendReply { text: text.into(), token_counts: None }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LlmError {
    #[error("completion exceeded the request timeout of {}s", timeout.as_secs_f64())]
    TimeoutExceeded { timeout: Duration },
    #[error("prompt of ~{estimated} tokens exceeds the context window of {limit} tokens")]
    ContextOverflow { estimated: usize, limit: usize },
    #[error("model backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("invalid completion request: {0}")]
    InvalidRequest(String),
}

impl LlmError {
    pub fn is_timeout(&self) -> bool {
        matches!(self, LlmError::TimeoutExceeded { .. })
    }
}

#[async_trait]
pub trait ChatBackend: Send + Sync {
    async fn chat(&self, config: &RoleConfig, messages: &[ChatMessage]) -> Result<BackendReply, LlmError>;
}

/// Upper-bound token estimate: `ceil(chars / 4)` per message, summed.
pub fn estimate_tokens(messages: &[ChatMessage]) -> usize {
    messages
        .iter()
        .map(|m| m.content.chars().count().div_ceil(CHARS_PER_TOKEN))
        .sum()
}

/// Shared entry point for all model calls. Cheap to clone.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    roles: Arc<RoleTable>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway").field("roles", &self.roles).finish_non_exhaustive()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, roles: RoleTable) -> Self {
        Gateway { backend, roles: Arc::new(roles) }
    }

    pub fn roles(&self) -> &RoleTable {
        &self.roles
    }

    pub fn config(&self, role: Role) -> &RoleConfig {
        self.roles.resolve(role)
    }

    pub async fn complete(&self, role: Role, messages: &[ChatMessage]) -> Result<CompletionResult, LlmError> {
        let config = self.roles.resolve(role).clone();
        self.complete_with(&config, messages).await
    }

    pub async fn complete_with(
        &self,
        config: &RoleConfig,
        messages: &[ChatMessage],
    ) -> Result<CompletionResult, LlmError> {
        config.validate()?;
        if messages.is_empty() {
            return Err(LlmError::InvalidRequest("no messages".into()));
        }
        if let Some(m) = messages
            .iter()
            .find(|m| m.author != Author::System && m.content.trim().is_empty())
        {
            return Err(LlmError::InvalidRequest(format!("empty {} message", m.author.as_str())));
        }
        let estimated = estimate_tokens(messages);
        if estimated > config.context_window_tokens {
            return Err(LlmError::ContextOverflow { estimated, limit: config.context_window_tokens });
        }

        let started = tokio::time::Instant::now();
        let reply = tokio::time::timeout(config.request_timeout, self.backend.chat(config, messages))
            .await
            .map_err(|_| LlmError::TimeoutExceeded { timeout: config.request_timeout })??;
        let latency = started.elapsed();
        tracing::debug!(role = %config.role, model = %config.model_id, ?latency, "completion");
        Ok(CompletionResult {
            text: reply.text,
            model_id: config.model_id.clone(),
            latency,
            token_counts: reply.token_counts,
        })
    }
}

pub(crate) mod duration_secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gateway(backend: ScriptedBackend) -> (Arc<ScriptedBackend>, Gateway) {
        let backend = Arc::new(backend);
        (backend.clone(), Gateway::new(backend, RoleTable::default()))
    }

    #[test]
    fn estimate_empty_is_zero() {
        assert_eq!(estimate_tokens(&[]), 0);
    }

    #[test]
    fn estimate_matches_ceil_quarter() {
        // Expected values worked out by hand: ceil(len / 4).
        let m = |n: usize| ChatMessage::user("x".repeat(n));
        assert_eq!(estimate_tokens(&[m(400)]), 100);
        assert_eq!(estimate_tokens(&[m(401)]), 101);
        assert_eq!(estimate_tokens(&[m(1)]), 1);
        assert_eq!(estimate_tokens(&[m(3), m(5)]), 1 + 2);
        // Characters, not bytes.
        assert_eq!(estimate_tokens(&[ChatMessage::user("ñññññ")]), 2);
    }

    #[test]
    fn defaults_follow_role_split() {
        let table = RoleTable::default();
        for role in Role::ALL {
            let cfg = table.resolve(role);
            assert_eq!(cfg.role, role);
            assert_eq!(cfg.context_window_tokens, 65_536);
            assert_eq!(cfg.request_timeout, Duration::from_secs(180));
        }
        assert_eq!(table.resolve(Role::Reasoner).temperature, 0.2);
        assert_eq!(table.resolve(Role::Critic).temperature, 0.2);
        assert_eq!(table.resolve(Role::Extractor).temperature, 0.0);
        assert_eq!(table.resolve(Role::Dialogue).temperature, 0.7);
    }

    #[test]
    fn invalid_role_config_is_rejected() {
        let mut table = RoleTable::default();
        let err = table.update(Role::Critic, |c| c.context_window_tokens = 0).unwrap_err();
        assert!(matches!(err, LlmError::InvalidRequest(_)));
        let err = table.update(Role::Critic, |c| c.request_timeout = Duration::ZERO).unwrap_err();
        assert!(matches!(err, LlmError::InvalidRequest(_)));
        assert_eq!(table.resolve(Role::Critic), &RoleConfig::default_for(Role::Critic));
    }

    #[tokio::test]
    async fn scripted_echo() {
        let (_, gw) = gateway(ScriptedBackend::new().with_script(Role::Reasoner, ["SELECT 1"]));
        let out = gw.complete(Role::Reasoner, &[ChatMessage::user("anything")]).await.unwrap();
        assert_eq!(out.text, "SELECT 1");
        assert_eq!(out.model_id, "qwen2.5:32b");
    }

    #[tokio::test(start_paused = true)]
    async fn stalled_backend_times_out() {
        let backend = ScriptedBackend::new();
        backend.push(Role::Reasoner, ScriptedReply::stall(Duration::from_secs(181), "late"));
        let (_, gw) = gateway(backend);
        let started = tokio::time::Instant::now();
        let err = gw.complete(Role::Reasoner, &[ChatMessage::user("q")]).await.unwrap_err();
        assert_eq!(err, LlmError::TimeoutExceeded { timeout: Duration::from_secs(180) });
        assert_eq!(started.elapsed(), Duration::from_secs(180));
    }

    #[tokio::test(start_paused = true)]
    async fn stall_inside_budget_succeeds() {
        let backend = ScriptedBackend::new();
        backend.push(Role::Reasoner, ScriptedReply::stall(Duration::from_secs(179), "ok"));
        let (_, gw) = gateway(backend);
        let out = gw.complete(Role::Reasoner, &[ChatMessage::user("q")]).await.unwrap();
        assert_eq!(out.text, "ok");
        assert!(out.latency <= Duration::from_secs(180));
    }

    #[tokio::test]
    async fn oversized_prompt_overflows() {
        let (backend, gw) = gateway(ScriptedBackend::new().with_script(Role::Reasoner, ["unused"]));
        let prompt = ChatMessage::user("a".repeat(70_000 * 4));
        assert_eq!(estimate_tokens(std::slice::from_ref(&prompt)), 70_000);
        let err = gw.complete(Role::Reasoner, &[prompt]).await.unwrap_err();
        assert_eq!(err, LlmError::ContextOverflow { estimated: 70_000, limit: 65_536 });
        assert_eq!(backend.calls(Role::Reasoner), 0);
    }

    #[tokio::test]
    async fn empty_request_is_invalid() {
        let (_, gw) = gateway(ScriptedBackend::new());
        assert!(matches!(gw.complete(Role::Dialogue, &[]).await, Err(LlmError::InvalidRequest(_))));
        assert!(matches!(
            gw.complete(Role::Dialogue, &[ChatMessage::user("  ")]).await,
            Err(LlmError::InvalidRequest(_))
        ));
    }

    #[tokio::test]
    async fn scripted_backend_is_deterministic() {
        let make = || ScriptedBackend::new().with_script(Role::Critic, ["a", "b"]).with_script(Role::Reasoner, ["c"]);
        let mut runs = Vec::new();
        for _ in 0..2 {
            let (_, gw) = gateway(make());
            let mut texts = Vec::new();
            for role in [Role::Critic, Role::Reasoner, Role::Critic, Role::Reasoner] {
                texts.push(gw.complete(role, &[ChatMessage::user("x")]).await.map(|r| r.text));
            }
            runs.push(texts);
        }
        assert_eq!(runs[0], runs[1]);
        assert_eq!(runs[0][0].as_deref(), Ok("a"));
        assert_eq!(runs[0][2].as_deref(), Ok("b"));
        assert!(matches!(runs[0][3], Err(LlmError::BackendUnavailable(_))));
    }

    proptest! {
        #[test]
        fn role_routing_is_total(idx in 0usize..4, model in "[a-z0-9:.]{1,12}") {
            let role = Role::ALL[idx];
            let mut table = RoleTable::default();
            table.update(role, |c| c.model_id = model.clone()).unwrap();
            for r in Role::ALL {
                let cfg = table.resolve(r);
                prop_assert_eq!(cfg.role, r);
                prop_assert!(cfg.validate().is_ok());
            }
            prop_assert_eq!(&table.resolve(role).model_id, &model);
        }

        #[test]
        fn estimate_is_monotone(a in proptest::collection::vec(".{0,60}", 0..6), extra in ".{0,60}") {
            let mut msgs: Vec<ChatMessage> = a.into_iter().map(ChatMessage::user).collect();
            let before = estimate_tokens(&msgs);
            msgs.push(ChatMessage::assistant(extra));
            prop_assert!(estimate_tokens(&msgs) >= before);
        }
    }
}
