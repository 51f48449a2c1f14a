//! Blocking client for an OpenAI-compatible chat-completions endpoint.

use std::time::Duration;

use serde::Serialize;
use serde_json::Value;

use super::chat::{ChatBackend, ChatReply, Usage};
use super::{CallKind, Message};
use crate::config::TeacherConfig;
use crate::error::{Error, Result};

pub const API_KEY_ENV: &str = "EVOKD_API_KEY";
pub const ENDPOINT_ENV: &str = "EVOKD_ENDPOINT";
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1";

#[derive(Serialize)]
struct RequestBody<'a> {
    model: &'a str,
    messages: &'a [Message],
    temperature: f64,
}

enum Attempt {
    Done(ChatReply),
    Transient(String),
}

pub struct LlmClient {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
    model: String,
    temperature: f64,
    max_attempts: u32,
    backoff: Duration,
    last_attempts: u32,
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient")
            .field("url", &self.url)
            .field("model", &self.model)
            .field("has_key", &self.api_key.is_some())
            .finish()
    }
}

fn is_local(endpoint: &str) -> bool {
    let rest = endpoint
        .strip_prefix("http://")
        .or_else(|| endpoint.strip_prefix("https://"))
        .unwrap_or(endpoint);
    let host = rest.split(['/', '?']).next().unwrap_or("");
    let host = if host.starts_with('[') {
        host.split(']').next().map(|h| &h[1..]).unwrap_or("")
    } else {
        host.split(':').next().unwrap_or("")
    };
    matches!(host, "localhost" | "127.0.0.1" | "::1")
}

impl LlmClient {
    /// Fails with a configuration error, before any network call, when a
    /// non-local endpoint is configured without an API key.
    pub fn new(endpoint: &str, api_key: Option<String>, config: &TeacherConfig) -> Result<Self> {
        let endpoint = endpoint.trim_end_matches('/');
        if endpoint.is_empty() {
            return Err(Error::Config("empty teacher endpoint".into()));
        }
        let api_key = api_key.filter(|k| !k.trim().is_empty());
        if api_key.is_none() && !is_local(endpoint) {
            return Err(Error::Config(format!(
                "{API_KEY_ENV} is not set but endpoint {endpoint} requires authentication"
            )));
        }
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        Ok(Self {
            agent,
            url: format!("{endpoint}/chat/completions"),
            api_key,
            model: config.model.clone(),
            temperature: config.temperature,
            max_attempts: config.max_attempts.max(1),
            backoff: Duration::from_millis(config.backoff_ms),
            last_attempts: 0,
        })
    }

    /// Endpoint from `EVOKD_ENDPOINT`, then the config, then the public default; key from `EVOKD_API_KEY`.
    pub fn from_env(config: &TeacherConfig) -> Result<Self> {
        let endpoint = std::env::var(ENDPOINT_ENV)
            .ok()
            .filter(|e| !e.is_empty())
            .or_else(|| config.endpoint.clone())
            .unwrap_or_else(|| DEFAULT_ENDPOINT.to_string());
        Self::new(&endpoint, std::env::var(API_KEY_ENV).ok(), config)
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Attempts used by the most recent call, retries included.
    pub fn last_attempts(&self) -> u32 {
        self.last_attempts
    }

    pub fn chat(&mut self, messages: &[Message]) -> Result<ChatReply> {
        let body = RequestBody {
            model: &self.model,
            messages,
            temperature: self.temperature,
        };
        let mut last_error = String::new();
        for attempt in 1..=self.max_attempts {
            self.last_attempts = attempt;
            match self.attempt(&body)? {
                Attempt::Done(reply) => {
                    tracing::info!(attempts = attempt, "chat completion succeeded");
                    return Ok(reply);
                }
                Attempt::Transient(why) => {
                    tracing::warn!(attempt, %why, "transient teacher failure");
                    last_error = why;
                    if attempt < self.max_attempts {
                        std::thread::sleep(self.backoff * 2u32.saturating_pow(attempt - 1));
                    }
                }
            }
        }
        Err(Error::TeacherUnavailable(format!(
            "{} failed after {} attempts: {last_error}",
            self.url, self.max_attempts
        )))
    }

    fn attempt(&self, body: &RequestBody<'_>) -> Result<Attempt> {
        let mut request = self.agent.post(&self.url).set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.set("Authorization", &format!("Bearer {key}"));
        }
        let response = match request.send_json(body) {
            Ok(response) => response,
            Err(ureq::Error::Status(code, response)) => {
                let detail = response.into_string().unwrap_or_default();
                return match code {
                    401 | 403 => Err(Error::Config(format!("teacher rejected credentials (HTTP {code}): {detail}"))),
                    408 | 429 | 500..=599 => Ok(Attempt::Transient(format!("HTTP {code}"))),
                    _ => Err(Error::TeacherProtocol(format!("HTTP {code}: {detail}"))),
                };
            }
            Err(ureq::Error::Transport(t)) => return Ok(Attempt::Transient(t.to_string())),
        };
        let text = match response.into_string() {
            Ok(text) => text,
            Err(e) => return Ok(Attempt::Transient(format!("reading response body: {e}"))),
        };
        Ok(Attempt::Done(parse_completion(&text)?))
    }
}

/// Extracts `choices[0].message.content` and optional `usage` from a response body.
pub fn parse_completion(body: &str) -> Result<ChatReply> {
    let value: Value = serde_json::from_str(body)
        .map_err(|e| Error::TeacherProtocol(format!("malformed JSON in completion response: {e}")))?;
    let content = value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::TeacherProtocol("response lacks choices[0].message.content".into()))?;
    let usage = match (
        value.pointer("/usage/prompt_tokens").and_then(Value::as_u64),
        value.pointer("/usage/completion_tokens").and_then(Value::as_u64),
    ) {
        (Some(prompt_tokens), Some(completion_tokens)) => Some(Usage {
            prompt_tokens,
            completion_tokens,
        }),
        _ => None,
    };
    Ok(ChatReply {
        content: content.to_string(),
        usage,
    })
}

impl ChatBackend for LlmClient {
    fn complete(&mut self, kind: CallKind, messages: &[Message]) -> Result<ChatReply> {
        tracing::debug!(?kind, messages = messages.len(), "chat call");
        self.chat(messages)
    }
}
