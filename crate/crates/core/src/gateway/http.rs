//! Live chat-completion backend speaking the common hosted-model JSON format.

use std::env;
use std::time::{Duration, Instant};

use reqwest::blocking::Client;
use serde_json::{json, Value};

use super::{Backend, BackendKind, ChatRequest, ChatResponse, EmbedRequest, GatewayError};

pub const API_KEY_ENV: &str = "LECTERN_API_KEY";
pub const API_BASE_ENV: &str = "LECTERN_API_BASE";

const DEFAULT_TIMEOUT: Duration = Duration::from_secs(180);

#[derive(Debug, Clone)]
pub struct HttpBackend {
    client: Client,
    base_url: String,
    api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>) -> Result<Self, GatewayError> {
        let client = Client::builder()
            .timeout(DEFAULT_TIMEOUT)
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
        })
    }

    /// Base URL and bearer token from the named environment variables.
    pub fn from_env_vars(base_var: &str, key_var: &str) -> Result<Self, GatewayError> {
        let base = env::var(base_var).map_err(|_| {
            GatewayError::InvalidRequest(format!("environment variable {base_var} is not set"))
        })?;
        Self::new(base, env::var(key_var).ok())
    }

    pub fn from_env() -> Result<Self, GatewayError> {
        Self::from_env_vars(API_BASE_ENV, API_KEY_ENV)
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, GatewayError> {
        let mut builder = self
            .client
            .post(format!("{}{path}", self.base_url))
            .json(body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder
            .send()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(GatewayError::Transport(format!("HTTP {status}: {text}")));
        }
        if !status.is_success() {
            return Err(GatewayError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        serde_json::from_str(&text).map_err(|e| GatewayError::Malformed(e.to_string()))
    }
}

impl Backend for HttpBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::LiveHttp
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let body = json!({
            "model": request.model_id,
            "messages": [{"role": "user", "content": request.rendered_prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_output,
        });
        let started = Instant::now();
        let value = self.post("/chat/completions", &body)?;
        let latency_ms = started.elapsed().as_millis() as u64;
        let text = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| GatewayError::Malformed("missing choices[0].message.content".into()))?
            .to_string();
        let usage = |field: &str| {
            value
                .pointer(&format!("/usage/{field}"))
                .and_then(Value::as_u64)
                .unwrap_or(0)
        };
        Ok(ChatResponse {
            text,
            prompt_tokens: usage("prompt_tokens"),
            completion_tokens: usage("completion_tokens"),
            latency_ms,
        })
    }

    fn embed(&self, request: &EmbedRequest) -> Result<Vec<f32>, GatewayError> {
        let body = json!({"model": request.model_id, "input": request.text});
        let value = self.post("/embeddings", &body)?;
        let values = value
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| GatewayError::Malformed("missing data[0].embedding".into()))?;
        values
            .iter()
            .map(|v| {
                v.as_f64()
                    .map(|x| x as f32)
                    .ok_or_else(|| GatewayError::Malformed("non-numeric embedding value".into()))
            })
            .collect()
    }
}
