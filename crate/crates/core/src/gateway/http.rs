//! Blocking HTTP adapter for a messages-style chat-completion endpoint.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use super::{
    build_request_body, validate_history, ChatClient, ChatMessage, GatewayError,
    GenerationParams, Usage,
};

/// Retry only transport-level failures (connection errors, 429, 5xx), with
/// exponential backoff. Retries never count as turns anywhere downstream.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    /// 3 attempts, pauses of 1 s and 4 s between them.
    fn default() -> Self {
        Self { max_attempts: 3, base_delay: Duration::from_secs(1), multiplier: 4.0 }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_attempts: u32) -> Self {
        Self { max_attempts, base_delay: Duration::ZERO, multiplier: 1.0 }
    }

    fn delay_before(&self, attempt: u32) -> Duration {
        // attempt is 1-based; the pause before retry k+1 is base * mult^(k-1)
        let factor = self.multiplier.powi(attempt as i32 - 1);
        self.base_delay.mul_f64(factor)
    }
}

pub struct HttpChatClient {
    endpoint: String,
    api_key: String,
    retry: RetryPolicy,
    token_budget: Option<u64>,
    tokens_used: AtomicU64,
    http: reqwest::blocking::Client,
}

impl HttpChatClient {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            retry: RetryPolicy::default(),
            token_budget: None,
            tokens_used: AtomicU64::new(0),
            http: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(300))
                .build()
                .expect("reqwest client"),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Local cost ceiling: the run aborts with `BudgetExceeded` once the
    /// summed usage passes this many tokens.
    pub fn with_token_budget(mut self, budget: Option<u64>) -> Self {
        self.token_budget = budget;
        self
    }

    pub fn tokens_used(&self) -> u64 {
        self.tokens_used.load(Ordering::Relaxed)
    }

    fn check_budget(&self) -> Result<(), GatewayError> {
        if let Some(limit) = self.token_budget {
            let used = self.tokens_used();
            if used >= limit {
                return Err(GatewayError::BudgetExceeded { used, limit });
            }
        }
        Ok(())
    }
}

impl ChatClient for HttpChatClient {
    fn complete(
        &self,
        history: &[ChatMessage],
        params: &GenerationParams,
    ) -> Result<(ChatMessage, Usage), GatewayError> {
        validate_history(history)?;
        params.validate()?;
        self.check_budget()?;

        let body = build_request_body(history, params);
        let mut last_error = String::new();
        for attempt in 1..=self.retry.max_attempts {
            if attempt > 1 {
                std::thread::sleep(self.retry.delay_before(attempt - 1));
            }
            let sent = self
                .http
                .post(&self.endpoint)
                .header("x-api-key", &self.api_key)
                .header("anthropic-version", "2023-06-01")
                .header("content-type", "application/json")
                .json(&body)
                .send();
            match sent {
                Err(e) => {
                    last_error = e.to_string();
                    log::warn!("transport error (attempt {attempt}): {last_error}");
                }
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let payload: serde_json::Value = resp.json().map_err(|e| {
                            GatewayError::Transport {
                                attempts: attempt,
                                message: format!("bad response body: {e}"),
                            }
                        })?;
                        return self.finish(payload);
                    }
                    let retryable = status.as_u16() == 429 || status.is_server_error();
                    let text = resp.text().unwrap_or_default();
                    if !retryable {
                        return Err(GatewayError::Refusal {
                            status: status.as_u16(),
                            payload: text,
                        });
                    }
                    last_error = format!("status {status}: {text}");
                    log::warn!("retryable provider error (attempt {attempt}): {last_error}");
                }
            }
        }
        Err(GatewayError::Transport {
            attempts: self.retry.max_attempts,
            message: last_error,
        })
    }
}

impl HttpChatClient {
    fn finish(&self, payload: serde_json::Value) -> Result<(ChatMessage, Usage), GatewayError> {
        let text = payload["content"]
            .as_array()
            .and_then(|parts| {
                parts
                    .iter()
                    .find(|p| p["type"] == "text")
                    .and_then(|p| p["text"].as_str())
            })
            .ok_or_else(|| GatewayError::Refusal {
                status: 200,
                payload: format!("response without text content: {payload}"),
            })?
            .to_string();
        let usage = Usage {
            input_tokens: payload["usage"]["input_tokens"].as_u64().unwrap_or(0),
            output_tokens: payload["usage"]["output_tokens"].as_u64().unwrap_or(0),
            thinking_tokens: payload["usage"]["thinking_tokens"].as_u64().unwrap_or(0),
        };
        self.tokens_used.fetch_add(usage.total(), Ordering::Relaxed);
        Ok((ChatMessage::assistant(text), usage))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backoff_schedule_is_exponential() {
        let retry = RetryPolicy::default();
        assert_eq!(retry.delay_before(1), Duration::from_secs(1));
        assert_eq!(retry.delay_before(2), Duration::from_secs(4));
        assert_eq!(retry.delay_before(3), Duration::from_secs(16));
    }

    #[test]
    fn budget_precheck_blocks_when_spent() {
        let client = HttpChatClient::new("http://127.0.0.1:9", "k")
            .with_token_budget(Some(10));
        client.tokens_used.store(10, Ordering::Relaxed);
        let history = [ChatMessage::system("s"), ChatMessage::user("u")];
        let err = client
            .complete(&history, &GenerationParams::new("m"))
            .unwrap_err();
        assert!(matches!(err, GatewayError::BudgetExceeded { used: 10, limit: 10 }));
    }

    #[test]
    fn unreachable_endpoint_exhausts_retries() {
        // port 9 (discard) with nothing listening: immediate connect errors
        let client = HttpChatClient::new("http://127.0.0.1:9", "k")
            .with_retry(RetryPolicy::no_delay(2));
        let history = [ChatMessage::system("s"), ChatMessage::user("u")];
        let err = client
            .complete(&history, &GenerationParams::new("m"))
            .unwrap_err();
        assert!(matches!(err, GatewayError::Transport { attempts: 2, .. }));
    }
}
