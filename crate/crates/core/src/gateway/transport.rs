use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{ModelEndpoint, Task};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: "user".into(), content: content.into() }
    }
}

/// Body of a chat-completions request. `task` and `sample` travel with the
/// request for routing and logging but are not sent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub top_p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_k: Option<u32>,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip)]
    pub task: Task,
    #[serde(skip)]
    pub sample: usize,
}

impl ChatRequest {
    /// Hex SHA-256 of the serialized body; the key for canned responses.
    pub fn hash(&self) -> String {
        let body = serde_json::to_vec(self).expect("request serializes");
        hex::encode(Sha256::digest(&body))
    }

    /// All message text, for substring routing.
    pub fn text(&self) -> String {
        self.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error("HTTP {code}: {body}")]
    Status { code: u16, body: String, retry_after: Option<Duration> },
    #[error("network: {0}")]
    Network(String),
    #[error("bad response: {0}")]
    Decode(String),
}

impl TransportError {
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Status { code, .. } => matches!(code, 408 | 409 | 429) || *code >= 500,
            TransportError::Network(_) => true,
            TransportError::Decode(_) => false,
        }
    }

    pub fn retry_after(&self) -> Option<Duration> {
        match self {
            TransportError::Status { retry_after, .. } => *retry_after,
            _ => None,
        }
    }
}

pub trait Transport: Send + Sync {
    /// One completion; returns the assistant message text.
    fn complete(&self, endpoint: &ModelEndpoint, request: &ChatRequest) -> Result<String, TransportError>;
}

/// Chat-completions over HTTP.
#[derive(Debug, Default)]
pub struct HttpTransport {
    clients: std::sync::Mutex<Vec<(Duration, reqwest::blocking::Client)>>,
}

impl HttpTransport {
    pub fn new() -> Self {
        HttpTransport::default()
    }

    fn client(&self, timeout: Duration) -> Result<reqwest::blocking::Client, TransportError> {
        let mut clients = self.clients.lock().unwrap_or_else(|e| e.into_inner());
        if let Some((_, c)) = clients.iter().find(|(t, _)| *t == timeout) {
            return Ok(c.clone());
        }
        let c = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| TransportError::Network(e.to_string()))?;
        clients.push((timeout, c.clone()));
        Ok(c)
    }
}

impl Transport for HttpTransport {
    fn complete(&self, endpoint: &ModelEndpoint, request: &ChatRequest) -> Result<String, TransportError> {
        let url = format!("{}/chat/completions", endpoint.base_url.trim_end_matches('/'));
        let mut req = self.client(endpoint.request_timeout)?.post(&url).json(request);
        if let Some(var) = &endpoint.api_key_env {
            if let Ok(key) = std::env::var(var) {
                req = req.bearer_auth(key);
            }
        }
        let resp = req.send().map_err(|e| TransportError::Network(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let retry_after = resp
                .headers()
                .get(reqwest::header::RETRY_AFTER)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            let body = resp.text().unwrap_or_default();
            return Err(TransportError::Status { code: status.as_u16(), body, retry_after });
        }
        let body: Value = resp.json().map_err(|e| TransportError::Decode(e.to_string()))?;
        body.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| TransportError::Decode("no choices[0].message.content".into()))
    }
}
