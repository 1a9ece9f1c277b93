//! Deterministic mock clients: scripted responses, an always-the-same-reply
//! client for adversarial loops, and a recording wrapper that logs the wire
//! body of every request.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;

use super::{
    build_request_body, validate_history, ChatClient, ChatMessage, GatewayError,
    GenerationParams, Usage,
};

/// Pops scripted (text, usage) responses in order; an exhausted script reads
/// as a transport failure.
pub struct ScriptedClient {
    queue: Mutex<std::collections::VecDeque<(String, Usage)>>,
}

impl ScriptedClient {
    pub fn new(responses: impl IntoIterator<Item = (String, Usage)>) -> Self {
        Self { queue: Mutex::new(responses.into_iter().collect()) }
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap().len()
    }
}

impl ChatClient for ScriptedClient {
    fn complete(
        &self,
        history: &[ChatMessage],
        params: &GenerationParams,
    ) -> Result<(ChatMessage, Usage), GatewayError> {
        validate_history(history)?;
        params.validate()?;
        let mut queue = self.queue.lock().unwrap();
        match queue.pop_front() {
            Some((text, usage)) => Ok((ChatMessage::assistant(text), usage)),
            None => Err(GatewayError::Transport {
                attempts: 1,
                message: "scripted responses exhausted".to_string(),
            }),
        }
    }
}

/// Always returns the same message; drives turn-limit and adversarial tests.
pub struct RepeatClient {
    pub text: String,
    pub usage: Usage,
}

impl RepeatClient {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into(), usage: Usage::default() }
    }
}

impl ChatClient for RepeatClient {
    fn complete(
        &self,
        history: &[ChatMessage],
        params: &GenerationParams,
    ) -> Result<(ChatMessage, Usage), GatewayError> {
        validate_history(history)?;
        params.validate()?;
        Ok((ChatMessage::assistant(self.text.clone()), self.usage))
    }
}

/// Wraps another client and records the provider wire body of each request,
/// in memory and optionally as JSONL on disk.
pub struct RecordingClient<C> {
    inner: C,
    requests: Mutex<Vec<serde_json::Value>>,
    log_path: Option<PathBuf>,
}

impl<C> RecordingClient<C> {
    pub fn new(inner: C) -> Self {
        Self { inner, requests: Mutex::new(Vec::new()), log_path: None }
    }

    pub fn with_log_file(mut self, path: impl Into<PathBuf>) -> Self {
        self.log_path = Some(path.into());
        self
    }

    pub fn recorded_requests(&self) -> Vec<serde_json::Value> {
        self.requests.lock().unwrap().clone()
    }
}

impl<C: ChatClient> ChatClient for RecordingClient<C> {
    fn complete(
        &self,
        history: &[ChatMessage],
        params: &GenerationParams,
    ) -> Result<(ChatMessage, Usage), GatewayError> {
        let body = build_request_body(history, params);
        if let Some(path) = &self.log_path {
            if let Ok(mut file) = std::fs::OpenOptions::new().create(true).append(true).open(path)
            {
                let _ = writeln!(file, "{body}");
            }
        }
        self.requests.lock().unwrap().push(body);
        self.inner.complete(history, params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn history() -> Vec<ChatMessage> {
        vec![ChatMessage::system("s"), ChatMessage::user("go")]
    }

    #[test]
    fn scripted_responses_pop_in_order_without_dedup() {
        let client = ScriptedClient::new([
            ("a".to_string(), Usage::default()),
            ("a".to_string(), Usage::default()),
            ("b".to_string(), Usage { input_tokens: 7, output_tokens: 3, thinking_tokens: 0 }),
        ]);
        let params = GenerationParams::new("m");
        let (m1, _) = client.complete(&history(), &params).unwrap();
        let (m2, _) = client.complete(&history(), &params).unwrap();
        let (m3, u3) = client.complete(&history(), &params).unwrap();
        assert_eq!((m1.content.as_str(), m2.content.as_str(), m3.content.as_str()), ("a", "a", "b"));
        assert_eq!(u3.input_tokens, 7);
    }

    #[test]
    fn empty_script_fails_first_call() {
        let client = ScriptedClient::new([]);
        let err = client.complete(&history(), &GenerationParams::new("m")).unwrap_err();
        assert!(matches!(err, GatewayError::Transport { .. }));
    }

    #[test]
    fn recorder_sees_messages_in_order() {
        let client = RecordingClient::new(ScriptedClient::new([(
            "ok".to_string(),
            Usage::default(),
        )]));
        let hist = vec![
            ChatMessage::system("s"),
            ChatMessage::user("one"),
            ChatMessage::assistant("two"),
            ChatMessage::user("three"),
        ];
        client.complete(&hist, &GenerationParams::new("m")).unwrap();
        let recorded = client.recorded_requests();
        assert_eq!(recorded.len(), 1);
        let messages = recorded[0]["messages"].as_array().unwrap();
        let contents: Vec<&str> =
            messages.iter().map(|m| m["content"].as_str().unwrap()).collect();
        assert_eq!(contents, ["one", "two", "three"]);
    }

    #[test]
    fn recorder_shows_thinking_absent_when_off() {
        let client = RecordingClient::new(RepeatClient::new("x"));
        let params = GenerationParams::new("m");
        client.complete(&history(), &params).unwrap();
        assert!(client.recorded_requests()[0].get("thinking").is_none());
    }

    #[test]
    fn history_is_not_mutated_by_complete() {
        let client = RepeatClient::new("x");
        let hist = history();
        let before = hist.clone();
        client.complete(&hist, &GenerationParams::new("m")).unwrap();
        assert_eq!(hist, before);
    }
}
