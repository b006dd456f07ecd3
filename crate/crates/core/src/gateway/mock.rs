use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{ChatRequest, ModelEndpoint, Task, Transport, TransportError};

/// Route requests whose text contains every `contains` string. Sample `i`
/// gets `responses[i % len]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    #[serde(default)]
    pub task: Option<Task>,
    #[serde(default)]
    pub contains: Vec<String>,
    pub responses: Vec<String>,
}

/// Canned responses: exact request hashes first, then rules in order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockResponses {
    #[serde(default)]
    pub responses: BTreeMap<String, String>,
    #[serde(default)]
    pub rules: Vec<MockRule>,
}

impl MockResponses {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text + "\n")
    }

    pub fn lookup(&self, request: &ChatRequest) -> Option<&str> {
        if let Some(r) = self.responses.get(&request.hash()) {
            return Some(r);
        }
        let text = request.text();
        self.rules
            .iter()
            .filter(|r| r.task.is_none_or(|t| t == request.task) && !r.responses.is_empty())
            .find(|r| r.contains.iter().all(|c| text.contains(c.as_str())))
            .map(|r| r.responses[request.sample % r.responses.len()].as_str())
    }
}

/// Deterministic offline endpoint. A request with no canned answer gets a
/// non-retryable 404.
#[derive(Debug, Default)]
pub struct MockEndpoint {
    canned: MockResponses,
    served: Mutex<Vec<(String, String)>>,
}

impl MockEndpoint {
    pub fn new(canned: MockResponses) -> Self {
        MockEndpoint { canned, served: Mutex::new(Vec::new()) }
    }

    /// Every (request hash, response) pair handed out so far.
    pub fn served(&self) -> Vec<(String, String)> {
        self.served.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl Transport for MockEndpoint {
    fn complete(&self, _endpoint: &ModelEndpoint, request: &ChatRequest) -> Result<String, TransportError> {
        let Some(resp) = self.canned.lookup(request) else {
            return Err(TransportError::Status {
                code: 404,
                body: format!("no canned response for request {}", request.hash()),
                retry_after: None,
            });
        };
        self.served.lock().unwrap_or_else(|e| e.into_inner()).push((request.hash(), resp.to_string()));
        Ok(resp.to_string())
    }
}

/// Wraps another transport and keeps every successful response keyed by
/// request hash, so a live session can be replayed through `MockEndpoint`.
pub struct Recorder {
    inner: Arc<dyn Transport>,
    seen: Mutex<MockResponses>,
}

impl Recorder {
    pub fn new(inner: Arc<dyn Transport>) -> Self {
        Recorder { inner, seen: Mutex::new(MockResponses::default()) }
    }

    pub fn recorded(&self) -> MockResponses {
        self.seen.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl Transport for Recorder {
    fn complete(&self, endpoint: &ModelEndpoint, request: &ChatRequest) -> Result<String, TransportError> {
        let out = self.inner.complete(endpoint, request)?;
        self.seen
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .responses
            .insert(request.hash(), out.clone());
        Ok(out)
    }
}
