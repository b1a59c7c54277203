//! Chat-completion and embedding gateway.
//!
//! Every model call in the pipeline goes through a [`Gateway`], which wraps a
//! [`Backend`] with request validation, bounded retries on transport failures
//! and empty-response rejection. Backends come in four flavours: a live HTTP
//! client, a scripted in-process responder, a recorder that appends to a
//! cassette, and a replayer that serves a cassette offline.

mod cassette;
mod http;
mod scripted;

use std::fmt;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cassette::{Cassette, CassetteEntry, RecordingBackend, ReplayBackend};
pub use http::{HttpBackend, API_BASE_ENV, API_KEY_ENV};
pub use scripted::{hashed_embedding, ScriptRule, ScriptedBackend};

/// Output cap used when the caller does not set one.
pub const DEFAULT_MAX_OUTPUT: u32 = 2048;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("backend rejected request with HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport failed after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("replay miss: no cassette entry for fingerprint {0}")]
    ReplayMiss(Fingerprint),
    #[error("model returned an empty response")]
    EmptyResponse,
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("cassette error: {0}")]
    Cassette(String),
    #[error("scripted backend has no response for prompt `{0}`")]
    NoScriptedResponse(String),
    #[error("{backend} backend does not support {operation}")]
    Unsupported {
        backend: &'static str,
        operation: &'static str,
    },
}

impl GatewayError {
    /// Only transport-level failures are worth another attempt.
    pub fn is_transient(&self) -> bool {
        matches!(self, GatewayError::Transport(_))
    }
}

/// Hex-encoded SHA-256 digest identifying a request.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fingerprint(String);

impl Fingerprint {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub prompt_id: String,
    pub rendered_prompt: String,
    pub model_id: String,
    pub temperature: f64,
    pub max_output: u32,
}

impl ChatRequest {
    pub fn new(
        prompt_id: impl Into<String>,
        rendered_prompt: impl Into<String>,
        model_id: impl Into<String>,
    ) -> Self {
        Self {
            prompt_id: prompt_id.into(),
            rendered_prompt: rendered_prompt.into(),
            model_id: model_id.into(),
            temperature: 0.0,
            max_output: DEFAULT_MAX_OUTPUT,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_output(mut self, max_output: u32) -> Self {
        self.max_output = max_output;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.rendered_prompt.is_empty() {
            return Err(GatewayError::InvalidRequest(
                "rendered prompt is empty".into(),
            ));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> Fingerprint {
        fingerprint(self)
    }
}

/// Stable digest over `(prompt_id, rendered_prompt, model_id, temperature)`.
///
/// Each text field is length-prefixed (u64 little-endian) and the temperature
/// contributes its IEEE-754 bit pattern, so the digest does not depend on
/// platform float formatting. `max_output` is deliberately not hashed.
pub fn fingerprint(request: &ChatRequest) -> Fingerprint {
    let mut hasher = Sha256::new();
    hasher.update(b"lectern/chat/v1");
    for field in [
        &request.prompt_id,
        &request.rendered_prompt,
        &request.model_id,
    ] {
        hasher.update((field.len() as u64).to_le_bytes());
        hasher.update(field.as_bytes());
    }
    // collapse -0.0 onto 0.0
    let temperature = request.temperature + 0.0;
    hasher.update(temperature.to_bits().to_le_bytes());
    Fingerprint(hex::encode(hasher.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub model_id: String,
    pub text: String,
}

impl EmbedRequest {
    pub fn new(model_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            text: text.into(),
        }
    }

    pub fn fingerprint(&self) -> Fingerprint {
        let mut hasher = Sha256::new();
        hasher.update(b"lectern/embed/v1");
        for field in [&self.model_id, &self.text] {
            hasher.update((field.len() as u64).to_le_bytes());
            hasher.update(field.as_bytes());
        }
        Fingerprint(hex::encode(hasher.finalize()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
}

impl ChatResponse {
    pub fn total_tokens(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    LiveHttp,
    Scripted,
    Record,
    Replay,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::LiveHttp => "live-http",
            BackendKind::Scripted => "scripted",
            BackendKind::Record => "record",
            BackendKind::Replay => "replay",
        })
    }
}

/// A model provider. Implementations must be safe to call from several
/// worker threads at once.
pub trait Backend: Send + Sync {
    fn kind(&self) -> BackendKind;

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;

    fn embed(&self, _request: &EmbedRequest) -> Result<Vec<f32>, GatewayError> {
        Err(GatewayError::Unsupported {
            backend: "this",
            operation: "embeddings",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    /// Same attempt count, no sleeping. Meant for tests and offline backends.
    pub fn immediate() -> Self {
        Self {
            base_delay: Duration::ZERO,
            ..Self::default()
        }
    }

    fn delay_before(&self, attempt: u32) -> Duration {
        // attempt is 1-based; the first retry waits base_delay, then doubles
        self.base_delay * 2u32.saturating_pow(attempt.saturating_sub(2))
    }
}

/// Send `request` to `backend`, retrying transport failures with exponential
/// backoff. Any other failure, including an empty reply, is returned as-is.
pub fn complete(
    request: &ChatRequest,
    backend: &dyn Backend,
    retry: &RetryPolicy,
) -> Result<ChatResponse, GatewayError> {
    request.validate()?;
    let response = with_retries(retry, || backend.complete(request))?;
    if response.text.trim().is_empty() {
        return Err(GatewayError::EmptyResponse);
    }
    Ok(response)
}

fn with_retries<T>(
    retry: &RetryPolicy,
    mut call: impl FnMut() -> Result<T, GatewayError>,
) -> Result<T, GatewayError> {
    let attempts = retry.attempts.max(1);
    let mut attempt = 1;
    loop {
        match call() {
            Ok(value) => return Ok(value),
            Err(err) if err.is_transient() => {
                if attempt >= attempts {
                    return Err(GatewayError::RetriesExhausted {
                        attempts,
                        last: err.to_string(),
                    });
                }
                attempt += 1;
                tracing::warn!(attempt, error = %err, "retrying model call");
                let delay = retry.delay_before(attempt);
                if !delay.is_zero() {
                    thread::sleep(delay);
                }
            }
            Err(err) => return Err(err),
        }
    }
}

/// A backend bound to a model id plus the call policy used by the pipeline.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn Backend>,
    model_id: String,
    embed_model_id: String,
    temperature: f64,
    max_output: u32,
    retry: RetryPolicy,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.kind())
            .field("model_id", &self.model_id)
            .field("embed_model_id", &self.embed_model_id)
            .field("temperature", &self.temperature)
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: impl Backend + 'static, model_id: impl Into<String>) -> Self {
        Self::from_shared(Arc::new(backend), model_id)
    }

    pub fn from_shared(backend: Arc<dyn Backend>, model_id: impl Into<String>) -> Self {
        let model_id = model_id.into();
        Self {
            backend,
            embed_model_id: model_id.clone(),
            model_id,
            temperature: 0.0,
            max_output: DEFAULT_MAX_OUTPUT,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_embed_model(mut self, model_id: impl Into<String>) -> Self {
        self.embed_model_id = model_id.into();
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_output(mut self, max_output: u32) -> Self {
        self.max_output = max_output;
        self
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn kind(&self) -> BackendKind {
        self.backend.kind()
    }

    /// Build a request for this gateway's model and defaults.
    pub fn request(&self, prompt_id: &str, rendered_prompt: String) -> ChatRequest {
        ChatRequest::new(prompt_id, rendered_prompt, self.model_id.clone())
            .with_temperature(self.temperature)
            .with_max_output(self.max_output)
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        complete(request, self.backend.as_ref(), &self.retry)
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f32>, GatewayError> {
        let request = EmbedRequest::new(self.embed_model_id.clone(), text);
        with_retries(&self.retry, || self.backend.embed(&request))
    }
}
