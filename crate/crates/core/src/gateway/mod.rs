//! Chat-completion endpoints for the translator, tester and wrapper writer,
//! plus extraction of tagged payloads from model output.

mod mock;
mod templates;
mod transport;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{parse_signature, split_functions, Direction, FunctionUnit, Signature};
use crate::suite::{split_cases, MarkerMismatch, TestSuite};
use crate::verify::Candidate;
use crate::wrapgen::find_launches;

pub use mock::{MockEndpoint, MockResponses, MockRule, Recorder};
pub use templates::{render, PromptMode, PromptTemplate, PromptVars, Task, TemplateSet};
pub use transport::{ChatRequest, HttpTransport, Message, Transport, TransportError};

pub const CODE_OPEN: &str = "[CODE]";
pub const CODE_CLOSE: &str = "[/CODE]";
pub const INPUTS_OPEN: &str = "[INPUTS]";
pub const INPUTS_CLOSE: &str = "[/INPUTS]";
pub const DEFAULT_N_TESTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEndpoint {
    /// Identifier recorded in reports; should change when the model does.
    #[serde(default)]
    pub name: String,
    pub base_url: String,
    pub model_name: String,
    #[serde(default = "one")]
    pub temperature: f64,
    #[serde(default = "one")]
    pub top_p: f64,
    #[serde(default)]
    pub top_k: Option<u32>,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_request_timeout", with = "crate::executor::secs")]
    pub request_timeout: Duration,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_concurrency")]
    pub concurrency_limit: usize,
    /// Environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub prompt_mode: PromptMode,
    /// Base delay for exponential backoff.
    #[serde(default = "default_backoff", with = "crate::executor::secs")]
    pub retry_base_delay: Duration,
    #[serde(default = "default_backoff_cap", with = "crate::executor::secs")]
    pub retry_max_delay: Duration,
    /// Sent as `seed + sample` so repeated samples are distinct requests.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn one() -> f64 {
    1.0
}
fn default_max_tokens() -> u32 {
    2048
}
fn default_request_timeout() -> Duration {
    Duration::from_secs(120)
}
fn default_max_retries() -> u32 {
    3
}
fn default_concurrency() -> usize {
    4
}
fn default_backoff() -> Duration {
    Duration::from_millis(500)
}
fn default_backoff_cap() -> Duration {
    Duration::from_secs(30)
}

impl ModelEndpoint {
    pub fn new(name: &str, base_url: &str, model_name: &str) -> Self {
        ModelEndpoint {
            name: name.into(),
            base_url: base_url.into(),
            model_name: model_name.into(),
            temperature: 1.0,
            top_p: 1.0,
            top_k: None,
            max_tokens: default_max_tokens(),
            request_timeout: default_request_timeout(),
            max_retries: default_max_retries(),
            concurrency_limit: default_concurrency(),
            api_key_env: None,
            prompt_mode: PromptMode::default(),
            retry_base_delay: default_backoff(),
            retry_max_delay: default_backoff_cap(),
            seed: None,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: String| Err(GatewayError::Config(m));
        if !(self.temperature >= 0.0) {
            return bad(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad(format!("top_p must be in (0, 1], got {}", self.top_p));
        }
        if self.concurrency_limit < 1 {
            return bad("concurrency_limit must be at least 1".into());
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive".into());
        }
        if self.model_name.is_empty() {
            return bad("model_name is empty".into());
        }
        Ok(())
    }

    /// Name if set, else the model name.
    pub fn id(&self) -> &str {
        if self.name.is_empty() {
            &self.model_name
        } else {
            &self.name
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("no `{0}` tag in response")]
    MissingOpen(String),
    #[error("`{0}` opened but never closed")]
    MissingClose(String),
    #[error("empty payload between `{0}` tags")]
    Empty(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("direction {direction} does not start from {language}")]
    Direction { direction: Direction, language: crate::corpus::Language },
    #[error("endpoint unreachable after {attempts} attempts: {last}")]
    Unreachable { attempts: u32, last: TransportError },
    #[error("request rejected: {0}")]
    Rejected(TransportError),
    #[error("no sample could be extracted ({} tried)", candidates.len())]
    NothingExtracted { candidates: Vec<Candidate> },
    #[error(transparent)]
    Extraction(#[from] ExtractError),
    #[error(transparent)]
    Markers(#[from] MarkerMismatch),
    #[error("wrapper parameters ({found}) do not match the kernel ({expected})")]
    InterfaceMismatch { expected: String, found: String },
    #[error("{0}")]
    Wrapper(String),
}

/// Payload between the first `open` tag and the next `close` tag, trimmed.
/// Later blocks are ignored.
pub fn extract_tagged(text: &str, open: &str, close: &str) -> Result<String, ExtractError> {
    let start = text.find(open).ok_or_else(|| ExtractError::MissingOpen(open.to_string()))? + open.len();
    let len = text[start..].find(close).ok_or_else(|| ExtractError::MissingClose(open.to_string()))?;
    let rest = &text[start + len + close.len()..];
    if rest.contains(open) {
        log::debug!("ignoring {} further {open} block(s)", rest.matches(open).count());
    }
    Ok(text[start..start + len].trim().to_string())
}

/// Drop a Markdown fence around a payload, if there is one.
pub fn strip_fence(payload: &str) -> &str {
    let t = payload.trim();
    let Some(after) = t.strip_prefix("```") else { return t };
    let Some(nl) = after.find('\n') else { return t };
    let body = &after[nl + 1..];
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore { free: Mutex::new(n), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// One endpoint with its templates, transport, in-flight cap and retry policy.
pub struct Gateway {
    endpoint: ModelEndpoint,
    templates: TemplateSet,
    transport: Arc<dyn Transport>,
    permits: Semaphore,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
    retries: AtomicUsize,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("endpoint", &self.endpoint.id()).finish()
    }
}

impl Gateway {
    pub fn new(
        endpoint: ModelEndpoint,
        templates: TemplateSet,
        transport: Arc<dyn Transport>,
    ) -> Result<Self, GatewayError> {
        endpoint.validate()?;
        Ok(Gateway {
            permits: Semaphore::new(endpoint.concurrency_limit),
            endpoint,
            templates,
            transport,
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
            retries: AtomicUsize::new(0),
        })
    }

    pub fn endpoint(&self) -> &ModelEndpoint {
        &self.endpoint
    }

    pub fn templates(&self) -> &TemplateSet {
        &self.templates
    }

    /// Retries performed so far.
    pub fn retry_events(&self) -> usize {
        self.retries.load(Ordering::SeqCst)
    }

    /// Highest number of simultaneous requests observed.
    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    fn template(&self, task: Task, direction: Option<Direction>) -> Result<&PromptTemplate, GatewayError> {
        self.templates
            .get(task, self.endpoint.prompt_mode, direction)
            .ok_or_else(|| GatewayError::Config(format!("no {} template", task.as_str())))
    }

    fn request(&self, task: Task, template: &PromptTemplate, vars: &PromptVars<'_>, sample: usize) -> ChatRequest {
        let (system, user) = template.render(vars);
        let mut messages = Vec::with_capacity(2);
        if let Some(s) = system {
            messages.push(Message::system(s));
        }
        messages.push(Message::user(user));
        ChatRequest {
            model: self.endpoint.model_name.clone(),
            messages,
            temperature: self.endpoint.temperature,
            top_p: self.endpoint.top_p,
            top_k: self.endpoint.top_k,
            max_tokens: self.endpoint.max_tokens,
            seed: self.endpoint.seed.map(|s| s.wrapping_add(sample as u64)),
            task,
            sample,
        }
    }

    /// Send with the in-flight cap and retry budget applied.
    pub fn send(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let mut attempt = 0u32;
        loop {
            let result = {
                let _permit = self.permits.acquire();
                let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
                let r = self.transport.complete(&self.endpoint, request);
                self.in_flight.fetch_sub(1, Ordering::SeqCst);
                r
            };
            match result {
                Ok(text) => return Ok(text),
                Err(e) if !e.is_retryable() => return Err(GatewayError::Rejected(e)),
                Err(e) if attempt >= self.endpoint.max_retries => {
                    return Err(GatewayError::Unreachable { attempts: attempt + 1, last: e })
                }
                Err(e) => {
                    let delay = e.retry_after().unwrap_or_else(|| self.backoff(attempt));
                    self.retries.fetch_add(1, Ordering::SeqCst);
                    log::warn!(
                        "{}: {} request failed ({e}); retry {} of {} in {:?}",
                        self.endpoint.id(),
                        request.task.as_str(),
                        attempt + 1,
                        self.endpoint.max_retries,
                        delay
                    );
                    std::thread::sleep(delay);
                    attempt += 1;
                }
            }
        }
    }

    // Full exponential step with jitter in [50%, 100%].
    fn backoff(&self, attempt: u32) -> Duration {
        let base = self.endpoint.retry_base_delay.as_secs_f64() * 2f64.powi(attempt.min(30) as i32);
        let capped = base.min(self.endpoint.retry_max_delay.as_secs_f64());
        Duration::from_secs_f64(capped * rand::thread_rng().gen_range(0.5..=1.0))
    }

    /// Sample `n_samples` translations of `unit`. Samples whose tags cannot
    /// be found come back with `extraction_error` set.
    pub fn request_translation(
        &self,
        unit: &FunctionUnit,
        direction: Direction,
        n_samples: usize,
    ) -> Result<Vec<Candidate>, GatewayError> {
        if direction.source() != unit.language {
            return Err(GatewayError::Direction { direction, language: unit.language });
        }
        if n_samples == 0 {
            return Err(GatewayError::Config("n_samples must be at least 1".into()));
        }
        let template = self.template(Task::Translate, Some(direction))?;
        let target = direction.target().display_name();
        let vars = PromptVars {
            source_code: &unit.source,
            source_lang: direction.source().display_name(),
            target_lang: target,
            n_tests: DEFAULT_N_TESTS,
        };
        let (open, close) = (format!("[{target}]"), format!("[/{target}]"));
        let mut out = Vec::with_capacity(n_samples);
        for sample in 0..n_samples {
            let text = self.send(&self.request(Task::Translate, template, &vars, sample))?;
            // Some models answer in the wrapper-style [CODE] block instead.
            let extracted = extract_tagged(&text, &open, &close)
                .or_else(|e| extract_tagged(&text, CODE_OPEN, CODE_CLOSE).map_err(|_| e))
                .map(|p| strip_fence(&p).to_string());
            let (source, extraction_error) = match extracted {
                Ok(p) if !p.is_empty() => (Some(p), None),
                Ok(_) => (None, Some(ExtractError::Empty(open.clone()).to_string())),
                Err(e) => (None, Some(e.to_string())),
            };
            out.push(Candidate {
                function_id: unit.id.clone(),
                direction,
                sample,
                source,
                wrapper: None,
                extraction_error,
            });
        }
        if out.iter().all(|c| c.source.is_none()) {
            return Err(GatewayError::NothingExtracted { candidates: out });
        }
        Ok(out)
    }

    /// Ask the tester for `n_tests` inputs and split them on the case markers.
    pub fn request_tests(&self, unit: &FunctionUnit, n_tests: usize) -> Result<TestSuite, GatewayError> {
        self.request_tests_for(&unit.id, &unit.name, &unit.source, unit.language, n_tests)
    }

    /// Same as `request_tests` for arbitrary code, e.g. a translated program.
    pub fn request_tests_for(
        &self,
        function_id: &str,
        function_name: &str,
        source: &str,
        language: crate::corpus::Language,
        n_tests: usize,
    ) -> Result<TestSuite, GatewayError> {
        if n_tests == 0 {
            return Err(GatewayError::Config("n_tests must be at least 1".into()));
        }
        let template = self.template(Task::GenTests, None)?;
        if !template.has_n_tests() && n_tests != DEFAULT_N_TESTS {
            return Err(GatewayError::Config(format!(
                "test template has a fixed count of {DEFAULT_N_TESTS}, {n_tests} requested"
            )));
        }
        let vars = PromptVars {
            source_code: source,
            source_lang: language.display_name(),
            target_lang: language.display_name(),
            n_tests,
        };
        let text = self.send(&self.request(Task::GenTests, template, &vars, 0))?;
        let raw = match extract_tagged(&text, INPUTS_OPEN, INPUTS_CLOSE) {
            Ok(p) => p,
            Err(ExtractError::MissingOpen(_)) => text.clone(),
            Err(e) => return Err(e.into()),
        };
        let raw: String = raw
            .lines()
            .filter(|l| !l.trim_start().starts_with("```"))
            .collect::<Vec<_>>()
            .join("\n");
        let cases = split_cases(&raw, n_tests)?;
        Ok(TestSuite { function_id: function_id.to_string(), function_name: function_name.to_string(), cases })
    }

    /// Ask for a host wrapper of a kernel unit and store it on success.
    pub fn request_cuda_wrapper(&self, unit: &mut FunctionUnit) -> Result<String, GatewayError> {
        if unit.language != crate::corpus::Language::Cuda || !unit.signature.is_kernel {
            return Err(GatewayError::Config(format!("{} is not a CUDA kernel", unit.name)));
        }
        let w = self.wrapper_for_kernel(&unit.source, &unit.signature, 0)?;
        unit.wrapper_source = Some(w.clone());
        Ok(w)
    }

    /// Wrapper for kernel source text, e.g. a translated candidate.
    pub fn wrapper_for_kernel(&self, kernel: &str, sig: &Signature, sample: usize) -> Result<String, GatewayError> {
        let template = self.template(Task::GenWrapper, None)?;
        let vars = PromptVars { source_code: kernel, source_lang: "CUDA", target_lang: "CUDA", n_tests: 0 };
        let text = self.send(&self.request(Task::GenWrapper, template, &vars, sample))?;
        let payload = extract_tagged(&text, CODE_OPEN, CODE_CLOSE)?;
        pick_wrapper(strip_fence(&payload), sig)
    }
}

/// Find the host function in `payload` that launches `sig.name` and check its
/// parameter names against the kernel's.
pub fn pick_wrapper(payload: &str, sig: &Signature) -> Result<String, GatewayError> {
    let mut fallback = None;
    for f in split_functions(payload) {
        let Ok(s) = parse_signature(f) else { continue };
        if s.is_kernel {
            continue;
        }
        let launches = find_launches(f).unwrap_or_default();
        if launches.iter().any(|l| l.name == sig.name) {
            return check_interface(f, &s, sig);
        }
        fallback.get_or_insert((f, s));
    }
    match fallback {
        Some((f, s)) => check_interface(f, &s, sig),
        None => Err(GatewayError::Wrapper(format!("no host function launching {} in response", sig.name))),
    }
}

fn check_interface(text: &str, found: &Signature, kernel: &Signature) -> Result<String, GatewayError> {
    let names = |s: &Signature| s.params.iter().map(|p| p.name.as_str()).collect::<Vec<_>>().join(", ");
    if names(found) != names(kernel) {
        return Err(GatewayError::InterfaceMismatch { expected: names(kernel), found: names(found) });
    }
    Ok(text.trim().to_string())
}
