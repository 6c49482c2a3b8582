//! Uniform completion interface over an OpenAI-compatible chat endpoint
//! and a deterministic scripted mock.
//!
//! The HTTP backend POSTs to `<base_url>/chat/completions` with bearer
//! auth read from the `ASSERTCTL_API_KEY` environment variable; the
//! credential travels only in the `Authorization` header, never in the
//! body. Transient failures (HTTP 429/5xx, timeouts, transport errors)
//! retry up to three times with exponential backoff; auth failures do not
//! retry.
//!
//! The mock backend replays a script keyed by `(instance id, call index)`,
//! falling back to an ordered list for unkeyed requests. The script file
//! uses the same line-record style as corpora, with fields
//! `{instance_id, call_index, text}`; a record with `instance_id` `"*"` is
//! a fallback entry, consumed in file order. Exhausting the script is an
//! error, never silent recycling.

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable holding the bearer credential.
pub const API_KEY_ENV: &str = "ASSERTCTL_API_KEY";

pub const DEFAULT_MAX_TOKENS: u32 = 512;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;
const MAX_RETRIES: u32 = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("authentication failure: {0}")]
    AuthFailure(String),
    #[error("rate limited after {0} attempts")]
    RateLimited(u32),
    #[error("transport: {0}")]
    Transport(String),
    #[error("mock script exhausted for {0}")]
    ScriptExhausted(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
}

/// Routing key for scripted mock responses: which instance this call
/// belongs to and the per-instance call number.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CallKey {
    pub instance_id: String,
    pub call_index: u32,
}

/// One completion request. `key` is mock-routing metadata and never
/// reaches the wire.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: Option<u64>,
    pub key: Option<CallKey>,
}

impl CompletionRequest {
    pub fn new(system: impl Into<String>, user: impl Into<String>) -> CompletionRequest {
        CompletionRequest {
            system: system.into(),
            user: user.into(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
            seed: None,
            key: None,
        }
    }

    pub fn with_key(mut self, instance_id: &str, call_index: u32) -> CompletionRequest {
        self.key = Some(CallKey { instance_id: instance_id.to_string(), call_index });
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.user.trim().is_empty() {
            return Err(BackendError::InvalidRequest("empty user message".to_string()));
        }
        if !self.temperature.is_finite() || !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest("max_tokens must be positive".to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionResponse {
    pub text: String,
    pub latency_ms: u64,
    pub backend_id: String,
}

/// A completion provider. `complete` blocks per call; bounded parallelism
/// lives in [`complete_batch`].
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError>;
}

/// Issues requests with at most `max_in_flight` outstanding at any
/// instant. Responses come back in request order regardless of completion
/// order; failures occupy their own slot without disturbing siblings.
pub fn complete_batch(
    backend: &dyn Backend,
    requests: &[CompletionRequest],
    max_in_flight: usize,
) -> Vec<Result<CompletionResponse, BackendError>> {
    assert!(max_in_flight >= 1, "max_in_flight must be at least 1");
    let slots: Vec<Mutex<Option<Result<CompletionResponse, BackendError>>>> =
        requests.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = max_in_flight.min(requests.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::SeqCst);
                if index >= requests.len() {
                    break;
                }
                let result = backend.complete(&requests[index]);
                *slots[index].lock().expect("result slot poisoned") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().expect("result slot poisoned").expect("worker filled slot"))
        .collect()
}

// ---------------------------------------------------------------------------
// HTTP backend
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireResponseMessage,
}

#[derive(Deserialize)]
struct WireResponseMessage {
    content: Option<String>,
}

/// OpenAI-compatible chat-completions client.
pub struct HttpBackend {
    base_url: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    retry_base: Duration,
    backend_id: String,
}

impl HttpBackend {
    pub fn new(base_url: &str, model: &str) -> HttpBackend {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        HttpBackend {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            agent,
            retry_base: Duration::from_secs(1),
            backend_id: format!("http:{model}"),
        }
    }

    /// Overrides the first backoff delay (doubling per retry). Tests use
    /// millisecond delays; the default is one second.
    pub fn with_retry_base(mut self, base: Duration) -> HttpBackend {
        self.retry_base = base;
        self
    }

    fn attempt(&self, request: &CompletionRequest) -> Result<Result<CompletionResponse, u16>, BackendError> {
        let key = self
            .api_key
            .as_ref()
            .ok_or_else(|| BackendError::AuthFailure(format!("{API_KEY_ENV} is not set")))?;
        let mut messages = Vec::new();
        if !request.system.is_empty() {
            messages.push(WireMessage { role: "system", content: &request.system });
        }
        messages.push(WireMessage { role: "user", content: &request.user });
        let body = WireRequest {
            model: &self.model,
            messages,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
            seed: request.seed,
        };
        let url = format!("{}/chat/completions", self.base_url);
        let mut response = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(&body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        match status {
            200..=299 => {
                let parsed: WireResponse = response
                    .body_mut()
                    .read_json()
                    .map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
                let text = parsed
                    .choices
                    .first()
                    .ok_or_else(|| BackendError::MalformedResponse("no choices".to_string()))?
                    .message
                    .content
                    .clone()
                    .unwrap_or_default();
                Ok(Ok(CompletionResponse { text, latency_ms: 0, backend_id: self.backend_id.clone() }))
            }
            401 | 403 => Err(BackendError::AuthFailure(format!("endpoint returned {status}"))),
            status => Ok(Err(status)),
        }
    }
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.backend_id
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        request.validate()?;
        let started = Instant::now();
        let mut last_status = 0u16;
        let mut last_transport: Option<BackendError> = None;
        for attempt in 0..=MAX_RETRIES {
            if attempt > 0 {
                std::thread::sleep(self.retry_base * 2u32.pow(attempt - 1));
            }
            match self.attempt(request) {
                Ok(Ok(mut response)) => {
                    response.latency_ms = started.elapsed().as_millis() as u64;
                    return Ok(response);
                }
                // Retryable HTTP statuses: 429 and 5xx. Anything else is
                // a hard client error.
                Ok(Err(status)) if status == 429 || (500..600).contains(&status) => {
                    last_status = status;
                }
                Ok(Err(status)) => {
                    return Err(BackendError::Transport(format!("endpoint returned {status}")))
                }
                Err(BackendError::Transport(detail)) => {
                    last_transport = Some(BackendError::Transport(detail));
                }
                Err(fatal) => return Err(fatal),
            }
        }
        if last_status == 429 {
            Err(BackendError::RateLimited(MAX_RETRIES + 1))
        } else if last_status != 0 {
            Err(BackendError::Transport(format!(
                "endpoint returned {last_status} after {} attempts",
                MAX_RETRIES + 1
            )))
        } else {
            Err(last_transport.unwrap_or_else(|| BackendError::Transport("unknown".to_string())))
        }
    }
}

// ---------------------------------------------------------------------------
// Mock backend
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptRecord {
    instance_id: String,
    call_index: u32,
    text: String,
}

/// Scripted responses: keyed entries are reusable lookups, fallback
/// entries are consumed in order.
#[derive(Debug, Clone, Default)]
pub struct MockScript {
    keyed: HashMap<(String, u32), String>,
    fallback: VecDeque<String>,
}

impl MockScript {
    pub fn new() -> MockScript {
        MockScript::default()
    }

    pub fn insert(&mut self, instance_id: &str, call_index: u32, text: &str) {
        self.keyed.insert((instance_id.to_string(), call_index), text.to_string());
    }

    pub fn push_fallback(&mut self, text: &str) {
        self.fallback.push_back(text.to_string());
    }

    pub fn parse(content: &str) -> Result<MockScript, BackendError> {
        let mut script = MockScript::new();
        for (idx, raw) in content.lines().enumerate() {
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            let record: ScriptRecord = serde_json::from_str(raw).map_err(|e| {
                BackendError::InvalidRequest(format!("mock script line {}: {e}", idx + 1))
            })?;
            if record.instance_id == "*" {
                script.push_fallback(&record.text);
            } else {
                script.insert(&record.instance_id, record.call_index, &record.text);
            }
        }
        Ok(script)
    }

    pub fn from_path(path: &Path) -> Result<MockScript, BackendError> {
        let content =
            fs::read_to_string(path).map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        MockScript::parse(&content)
    }
}

/// Deterministic offline backend. Lookups are serialized internally, so
/// concurrent batches stay reproducible.
pub struct MockBackend {
    script: Mutex<MockScript>,
    calls: AtomicUsize,
    delay: Option<(u64, u64)>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> MockBackend {
        MockBackend { script: Mutex::new(script), calls: AtomicUsize::new(0), delay: None }
    }

    /// Injects a pseudo-random per-call delay up to `max_ms`, derived from
    /// `seed` and the call number. Used to verify that batch ordering does
    /// not depend on completion order.
    pub fn with_random_delays(mut self, seed: u64, max_ms: u64) -> MockBackend {
        self.delay = Some((seed, max_ms));
        self
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for MockBackend {
    fn id(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        request.validate()?;
        let call_number = self.calls.fetch_add(1, Ordering::SeqCst) as u64;
        if let Some((seed, max_ms)) = self.delay {
            // splitmix64 of (seed, call number); quality is irrelevant,
            // it only has to scramble completion order.
            let mut z = seed.wrapping_add(call_number).wrapping_add(0x9e3779b97f4a7c15);
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            z ^= z >> 31;
            std::thread::sleep(Duration::from_millis(z % (max_ms + 1)));
        }
        let mut script = self.script.lock().expect("mock script poisoned");
        let keyed = request
            .key
            .as_ref()
            .and_then(|k| script.keyed.get(&(k.instance_id.clone(), k.call_index)).cloned());
        let text = match keyed {
            Some(text) => text,
            None => script.fallback.pop_front().ok_or_else(|| {
                BackendError::ScriptExhausted(match &request.key {
                    Some(k) => format!("({}, {})", k.instance_id, k.call_index),
                    None => "unkeyed request".to_string(),
                })
            })?,
        };
        Ok(CompletionResponse { text, latency_ms: 0, backend_id: "mock".to_string() })
    }
}
