use std::collections::HashMap;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{BackendReply, ChatBackend, ChatMessage, LlmError, Role, RoleConfig, TokenCounts};

/// Extra time the HTTP client waits past the role timeout before it drops the
/// connection. The gateway's own timer fires first.
const CLIENT_GRACE: Duration = Duration::from_secs(2);

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f32,
    max_tokens: usize,
    stream: bool,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

/// Client for OpenAI-compatible `chat/completions` endpoints.
#[derive(Debug, Clone)]
pub struct HttpChatBackend {
    http: reqwest::Client,
    default_endpoint: String,
    endpoints: HashMap<Role, String>,
    api_key: Option<String>,
}

impl HttpChatBackend {
    /// `endpoint` is the full URL of the completions route, e.g.
    /// `http://localhost:11434/v1/chat/completions`.
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpChatBackend {
            http: reqwest::Client::new(),
            default_endpoint: endpoint.into(),
            endpoints: HashMap::new(),
            api_key: None,
        }
    }

    pub fn with_role_endpoint(mut self, role: Role, endpoint: impl Into<String>) -> Self {
        self.endpoints.insert(role, endpoint.into());
        self
    }

    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        let key = key.into();
        self.api_key = (!key.is_empty()).then_some(key);
        self
    }

    pub fn endpoint(&self, role: Role) -> &str {
        self.endpoints.get(&role).map_or(&self.default_endpoint, String::as_str)
    }
}

#[async_trait]
impl ChatBackend for HttpChatBackend {
    async fn chat(&self, config: &RoleConfig, messages: &[ChatMessage]) -> Result<BackendReply, LlmError> {
        let body = ChatRequest {
            model: &config.model_id,
            messages: messages
                .iter()
                .map(|m| WireMessage { role: m.author.as_str(), content: &m.content })
                .collect(),
            temperature: config.temperature,
            max_tokens: config.max_output_tokens,
            stream: false,
        };
        let mut req = self
            .http
            .post(self.endpoint(config.role))
            .timeout(config.request_timeout + CLIENT_GRACE)
            .json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                LlmError::TimeoutExceeded { timeout: config.request_timeout }
            } else {
                LlmError::BackendUnavailable(e.to_string())
            }
        };
        let response = req.send().await.map_err(classify)?;
        let status = response.status();
        if !status.is_success() {
            let text = response.text().await.unwrap_or_default();
            return Err(LlmError::BackendUnavailable(format!("HTTP {status}: {text}")));
        }
        let parsed: ChatResponse = response
            .json()
            .await
            .map_err(|e| LlmError::BackendUnavailable(format!("malformed completion response: {e}")))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| LlmError::BackendUnavailable("completion response has no choices".into()))?;
        Ok(BackendReply {
            text,
            token_counts: parsed.usage.map(|u| TokenCounts { prompt: u.prompt_tokens, output: u.completion_tokens }),
        })
    }
}
