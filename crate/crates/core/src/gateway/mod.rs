//! Provider-agnostic chat-completion client with message history, token and
//! thinking-budget parameters, retries, and deterministic mocks for tests
//! and replay.

mod http;
mod mock;

pub use http::{HttpChatClient, RetryPolicy};
pub use mock::{RecordingClient, RepeatClient, ScriptedClient};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

/// Sampling and limit parameters for one completion call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub model_id: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Extended-reasoning token budget; absent keeps thinking off entirely.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thinking_budget: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

fn default_max_tokens() -> u32 {
    1024
}

/// Default thinking budget applied when thinking is switched on without an
/// explicit size.
pub const DEFAULT_THINKING_BUDGET: u32 = 1024;

impl GenerationParams {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            max_tokens: default_max_tokens(),
            thinking_budget: None,
            temperature: None,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_tokens < 1 {
            return Err(GatewayError::InvalidParams("max_tokens must be >= 1".into()));
        }
        if self.thinking_budget == Some(0) {
            return Err(GatewayError::InvalidParams(
                "thinking_budget, when present, must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Token accounting for one completion. `thinking_tokens` stays 0 when
/// thinking is off.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
    #[serde(default)]
    pub thinking_tokens: u64,
}

impl Usage {
    pub fn total(&self) -> u64 {
        self.input_tokens + self.output_tokens + self.thinking_tokens
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider refused the request (status {status}): {payload}")]
    Refusal { status: u16, payload: String },
    #[error("token budget exceeded: {used} used of {limit}")]
    BudgetExceeded { used: u64, limit: u64 },
    #[error("invalid history: {0}")]
    InvalidHistory(String),
    #[error("invalid params: {0}")]
    InvalidParams(String),
}

/// A chat-completion backend. Implementations never mutate the history; the
/// caller owns all appends.
pub trait ChatClient: Send + Sync {
    fn complete(
        &self,
        history: &[ChatMessage],
        params: &GenerationParams,
    ) -> Result<(ChatMessage, Usage), GatewayError>;
}

/// History must start with exactly one system message; later messages carry
/// non-empty user/assistant content.
pub fn validate_history(history: &[ChatMessage]) -> Result<(), GatewayError> {
    let Some(first) = history.first() else {
        return Err(GatewayError::InvalidHistory("history is empty".into()));
    };
    if first.role != Role::System {
        return Err(GatewayError::InvalidHistory(
            "history must begin with a system message".into(),
        ));
    }
    for (i, msg) in history.iter().enumerate().skip(1) {
        if msg.role == Role::System {
            return Err(GatewayError::InvalidHistory(format!(
                "unexpected second system message at index {i}"
            )));
        }
        if msg.content.is_empty() {
            return Err(GatewayError::InvalidHistory(format!(
                "empty {:?} message at index {i}",
                msg.role
            )));
        }
    }
    Ok(())
}

/// Map (history, params) onto the provider wire format. The recording mock
/// logs exactly this body, so tests can assert what would go on the wire —
/// notably that no thinking field exists at all when the budget is absent.
pub fn build_request_body(
    history: &[ChatMessage],
    params: &GenerationParams,
) -> serde_json::Value {
    let system = history
        .first()
        .filter(|m| m.role == Role::System)
        .map(|m| m.content.clone())
        .unwrap_or_default();
    let messages: Vec<serde_json::Value> = history
        .iter()
        .filter(|m| m.role != Role::System)
        .map(|m| {
            serde_json::json!({
                "role": match m.role { Role::User => "user", _ => "assistant" },
                "content": m.content,
            })
        })
        .collect();
    let mut body = serde_json::json!({
        "model": params.model_id,
        "max_tokens": params.max_tokens,
        "system": system,
        "messages": messages,
    });
    if let Some(budget) = params.thinking_budget {
        body["thinking"] = serde_json::json!({ "type": "enabled", "budget_tokens": budget });
    }
    if let Some(t) = params.temperature {
        body["temperature"] = serde_json::json!(t);
    }
    body
}
