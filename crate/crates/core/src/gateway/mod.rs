//! Provider-agnostic completion gateway.
//!
//! Every stage of the pipeline talks to a language model through a
//! [`Gateway`]. The gateway owns one [`CompletionBackend`] and layers retry
//! with exponential backoff, a per-run call budget, an optional token-bucket
//! rate limiter and an optional content-addressed [`ResponseCache`] on top
//! of it. With a [`ScriptedBackend`] or [`ReplayBackend`] the whole pipeline
//! becomes a pure function of its inputs.

mod backend;
mod cache;
mod limiter;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    prompt_digest, record_fixture, HttpBackend, RecordingBackend, ReplayBackend, ReplayFixture, ResponderBackend,
    Script, ScriptRule, ScriptedBackend,
};
pub use cache::{cache_key, ResponseCache};
pub use limiter::TokenBucket;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    /// Network failure or retriable provider status, after all retries.
    #[error("transport error: {0}")]
    Transport(String),
    /// Non-retriable provider rejection (bad request, auth).
    #[error("provider returned status {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("call budget of {limit} completions exhausted")]
    BudgetExceeded { limit: usize },
    #[error("scripted backend has no reply left")]
    ScriptExhausted,
    #[error("no replay fixture for prompt digest {digest}")]
    FixtureMissing { digest: String },
    #[error("cache entry {path} is corrupt: {reason}")]
    CacheCorrupt { path: PathBuf, reason: String },
    #[error("invalid completion request: {0}")]
    InvalidRequest(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

impl GatewayError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, GatewayError::Transport(_))
    }
}

/// Sampling parameters applied to every request a gateway builds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            model_id: "gpt-3.5-turbo".to_string(),
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub model_id: String,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>, params: &ModelParams) -> Result<Self, GatewayError> {
        let prompt = prompt.into();
        if prompt.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("prompt is empty".into()));
        }
        if params.temperature.is_nan() || params.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} must be non-negative",
                params.temperature
            )));
        }
        if params.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(Self {
            prompt,
            temperature: params.temperature,
            max_tokens: params.max_tokens,
            model_id: params.model_id.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CompletionResult {
    pub text: String,
    pub provider_meta: BTreeMap<String, String>,
    pub from_cache: bool,
}

impl CompletionResult {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            ..Default::default()
        }
    }
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    HttpProvider,
    Scripted,
    Replay,
}

/// Declarative backend selection, as read from config or CLI flags.
///
/// Recognised keys: `script` (Scripted), `fixtures` (Replay), `endpoint`,
/// `api_key` and `timeout_secs` (HttpProvider).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    pub config: BTreeMap<String, String>,
}

impl BackendDescriptor {
    pub fn scripted(script: impl Into<String>) -> Self {
        Self::with(BackendKind::Scripted, [("script", script.into())])
    }

    pub fn replay(fixtures: impl Into<String>) -> Self {
        Self::with(BackendKind::Replay, [("fixtures", fixtures.into())])
    }

    pub fn http(endpoint: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self::with(
            BackendKind::HttpProvider,
            [("endpoint", endpoint.into()), ("api_key", api_key.into())],
        )
    }

    fn with<const N: usize>(kind: BackendKind, pairs: [(&str, String); N]) -> Self {
        Self {
            kind,
            config: pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }

    fn require(&self, key: &str) -> Result<&str, GatewayError> {
        self.config
            .get(key)
            .map(String::as_str)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| GatewayError::Config(format!("{:?} backend requires `{key}`", self.kind)))
    }

    pub fn build(&self) -> Result<Box<dyn CompletionBackend>, GatewayError> {
        Ok(match self.kind {
            BackendKind::Scripted => Box::new(ScriptedBackend::from_file(self.require("script")?)?),
            BackendKind::Replay => Box::new(ReplayBackend::open(self.require("fixtures")?)?),
            BackendKind::HttpProvider => {
                let mut http = HttpBackend::new(self.require("endpoint")?, self.config.get("api_key").cloned());
                if let Some(t) = self.config.get("timeout_secs") {
                    let secs = t
                        .parse()
                        .map_err(|_| GatewayError::Config(format!("timeout_secs `{t}` is not an integer")))?;
                    http = http.with_timeout(Duration::from_secs(secs));
                }
                Box::new(http)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            ..Default::default()
        }
    }

    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

pub const DEFAULT_CALL_BUDGET: usize = 500;

pub struct Gateway {
    backend: Box<dyn CompletionBackend>,
    params: ModelParams,
    retry: RetryPolicy,
    budget: Option<usize>,
    calls: AtomicUsize,
    limiter: Option<TokenBucket>,
    cache: Option<ResponseCache>,
}

impl Gateway {
    pub fn new(backend: Box<dyn CompletionBackend>) -> Self {
        Self {
            backend,
            params: ModelParams::default(),
            retry: RetryPolicy::default(),
            budget: Some(DEFAULT_CALL_BUDGET),
            calls: AtomicUsize::new(0),
            limiter: None,
            cache: None,
        }
    }

    pub fn from_descriptor(descriptor: &BackendDescriptor) -> Result<Self, GatewayError> {
        Ok(Self::new(descriptor.build()?))
    }

    /// Gateway over an in-memory FIFO script, for tests and examples.
    pub fn scripted<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(Box::new(ScriptedBackend::new(replies)))
    }

    pub fn with_params(mut self, params: ModelParams) -> Self {
        self.params = params;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// `None` disables the ceiling.
    pub fn with_budget(mut self, budget: Option<usize>) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_rate_limit(mut self, limiter: TokenBucket) -> Self {
        self.limiter = Some(limiter);
        self
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Provider attempts made so far, retries included. Cache hits are free.
    pub fn provider_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn reserve_call(&self) -> Result<(), GatewayError> {
        match self.budget {
            None => {
                self.calls.fetch_add(1, Ordering::SeqCst);
                Ok(())
            }
            Some(limit) => self
                .calls
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| (n < limit).then_some(n + 1))
                .map(|_| ())
                .map_err(|_| GatewayError::BudgetExceeded { limit }),
        }
    }

    /// Sends `request` to the backend, retrying transient transport failures.
    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        let mut attempt = 0;
        loop {
            self.reserve_call()?;
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            match self.backend.complete(request) {
                Ok(mut result) => {
                    result.from_cache = false;
                    return Ok(result);
                }
                Err(e) if e.is_retriable() && attempt < self.retry.max_retries => {
                    let delay = self.retry.delay(attempt);
                    tracing::warn!(attempt, ?delay, error = %e, "transient completion failure, retrying");
                    thread::sleep(delay);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    pub fn cached_complete(
        &self,
        request: &CompletionRequest,
        cache: &ResponseCache,
    ) -> Result<CompletionResult, GatewayError> {
        let key = cache_key(request);
        if let Some(text) = cache.get(&key)? {
            return Ok(CompletionResult {
                text,
                provider_meta: BTreeMap::new(),
                from_cache: true,
            });
        }
        let result = self.complete(request)?;
        cache.put(&key, &result.text)?;
        Ok(result)
    }

    /// Builds a request from the gateway's model parameters and sends it,
    /// through the attached cache when there is one.
    pub fn ask(&self, prompt: impl Into<String>) -> Result<CompletionResult, GatewayError> {
        let request = CompletionRequest::new(prompt, &self.params)?;
        match &self.cache {
            Some(cache) => self.cached_complete(&request, cache),
            None => self.complete(&request),
        }
    }
}
