use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{GenerationConfig, PromptBundle};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("request rejected: {0}")]
    Rejected(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_) | BackendError::RateLimited(_))
    }
}

pub trait LlmBackend: Send + Sync {
    fn descriptor(&self) -> String;

    /// Whether JSON-mode hints (`response_format`) should be sent.
    fn supports_structured_output(&self) -> bool {
        false
    }

    fn complete(&self, bundle: &PromptBundle, config: &GenerationConfig) -> Result<String, BackendError>;
}

type Responder = Box<dyn Fn(&PromptBundle) -> String + Send + Sync>;

/// Test backend: canned answers keyed by the SHA-256 of the rendered
/// prompt, with an optional responder or fixed default for everything else.
pub struct MockBackend {
    name: String,
    canned: HashMap<String, String>,
    responder: Option<Responder>,
    default: Option<String>,
    fail_first: AtomicUsize,
    failure: BackendError,
    calls: AtomicUsize,
}

impl MockBackend {
    pub fn new(name: impl Into<String>) -> Self {
        MockBackend {
            name: name.into(),
            canned: HashMap::new(),
            responder: None,
            default: None,
            fail_first: AtomicUsize::new(0),
            failure: BackendError::Transport("simulated".into()),
            calls: AtomicUsize::new(0),
        }
    }

    /// Always answer `text`.
    pub fn constant(text: impl Into<String>) -> Self {
        MockBackend::new("mock").with_default(text)
    }

    pub fn prompt_hash(bundle: &PromptBundle) -> String {
        hex::encode(Sha256::digest(bundle.render().as_bytes()))
    }

    pub fn with_canned(mut self, bundle: &PromptBundle, text: impl Into<String>) -> Self {
        self.canned.insert(Self::prompt_hash(bundle), text.into());
        self
    }

    pub fn with_default(mut self, text: impl Into<String>) -> Self {
        self.default = Some(text.into());
        self
    }

    pub fn with_responder(mut self, f: impl Fn(&PromptBundle) -> String + Send + Sync + 'static) -> Self {
        self.responder = Some(Box::new(f));
        self
    }

    /// Fail the first `n` calls with `error`.
    pub fn failing_first(mut self, n: usize, error: BackendError) -> Self {
        self.fail_first = AtomicUsize::new(n);
        self.failure = error;
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl LlmBackend for MockBackend {
    fn descriptor(&self) -> String {
        self.name.clone()
    }

    fn complete(&self, bundle: &PromptBundle, _config: &GenerationConfig) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self
            .fail_first
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok()
        {
            return Err(self.failure.clone());
        }
        if let Some(text) = self.canned.get(&Self::prompt_hash(bundle)) {
            return Ok(text.clone());
        }
        if let Some(f) = &self.responder {
            return Ok(f(bundle));
        }
        self.default
            .clone()
            .ok_or_else(|| BackendError::Rejected("no canned response for prompt".into()))
    }
}

/// Minimum spacing between requests.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(requests: u32) -> Self {
        let interval = if requests == 0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(60.0 / f64::from(requests))
        };
        RateLimiter {
            interval,
            next: Mutex::new(None),
        }
    }

    pub fn acquire(&self) {
        if self.interval.is_zero() {
            return;
        }
        let wait = {
            let mut next = self.next.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot.saturating_duration_since(now)
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

/// Chat-completions client for any endpoint speaking the common
/// `messages`/`temperature`/`top_p`/`max_tokens` JSON shape.
pub struct HttpChatBackend {
    name: String,
    base_url: String,
    api_key: Option<String>,
    structured_output: bool,
    client: reqwest::blocking::Client,
    limiter: RateLimiter,
}

impl HttpChatBackend {
    pub fn new(
        name: impl Into<String>,
        base_url: impl Into<String>,
        api_key: Option<String>,
        structured_output: bool,
        requests_per_minute: u32,
        timeout: Duration,
    ) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(HttpChatBackend {
            name: name.into(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            structured_output,
            client,
            limiter: RateLimiter::per_minute(requests_per_minute),
        })
    }

    pub fn request_body(&self, bundle: &PromptBundle, config: &GenerationConfig) -> Value {
        let mut body = json!({
            "model": config.model_id,
            "messages": [
                {"role": "system", "content": bundle.system_message},
                {"role": "user", "content": bundle.user_message()},
            ],
            "temperature": config.temperature,
            "top_p": config.top_p,
            "max_tokens": config.max_tokens,
        });
        if self.structured_output {
            body["response_format"] = json!({"type": "json_object"});
        }
        body
    }
}

impl LlmBackend for HttpChatBackend {
    fn descriptor(&self) -> String {
        format!("{}@{}", self.name, self.base_url)
    }

    fn supports_structured_output(&self) -> bool {
        self.structured_output
    }

    fn complete(&self, bundle: &PromptBundle, config: &GenerationConfig) -> Result<String, BackendError> {
        self.limiter.acquire();
        let mut req = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .json(&self.request_body(bundle, config));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| BackendError::Transport(e.to_string()))?;
        if status.as_u16() == 429 {
            return Err(BackendError::RateLimited(text));
        }
        if status.is_server_error() {
            return Err(BackendError::Transport(format!("status {status}: {text}")));
        }
        if !status.is_success() {
            return Err(BackendError::Rejected(format!("status {status}: {text}")));
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| BackendError::Rejected(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| BackendError::Rejected("response has no choices[0].message.content".into()))
    }
}
