//! In-process scripted backend for deterministic tests and offline runs.

use std::fs;
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{Backend, BackendKind, ChatRequest, ChatResponse, EmbedRequest, GatewayError};

type ChatFn = dyn Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync;
type EmbedFn = dyn Fn(&EmbedRequest) -> Result<Vec<f32>, GatewayError> + Send + Sync;

/// Answers chat requests with a closure. Token counts are whitespace word
/// counts so that traces stay deterministic.
pub struct ScriptedBackend {
    chat: Box<ChatFn>,
    embed: Option<Box<EmbedFn>>,
}

impl ScriptedBackend {
    pub fn new(
        respond: impl Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            chat: Box::new(respond),
            embed: None,
        }
    }

    pub fn fixed(text: impl Into<String>) -> Self {
        let text = text.into();
        Self::new(move |_| Ok(text.clone()))
    }

    /// Reply by prompt id; unknown ids are an error.
    pub fn by_prompt<K, V>(pairs: impl IntoIterator<Item = (K, V)>) -> Self
    where
        K: Into<String>,
        V: Into<String>,
    {
        let table: Vec<(String, String)> = pairs
            .into_iter()
            .map(|(k, v)| (k.into(), v.into()))
            .collect();
        Self::new(move |req| {
            table
                .iter()
                .find(|(id, _)| *id == req.prompt_id)
                .map(|(_, text)| text.clone())
                .ok_or_else(|| GatewayError::NoScriptedResponse(req.prompt_id.clone()))
        })
    }

    /// First matching rule wins, then `default` if given.
    pub fn from_rules(rules: Vec<ScriptRule>, default: Option<String>) -> Self {
        Self::new(move |req| {
            rules
                .iter()
                .find(|rule| rule.matches(req))
                .map(|rule| rule.response.clone())
                .or_else(|| default.clone())
                .ok_or_else(|| GatewayError::NoScriptedResponse(req.prompt_id.clone()))
        })
    }

    /// Load a JSON script: `{"rules": [...], "default": "...", "embedding_dim": 64}`.
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let raw = fs::read_to_string(path)
            .map_err(|e| GatewayError::Cassette(format!("{}: {e}", path.display())))?;
        let script: ScriptFile = serde_json::from_str(&raw)
            .map_err(|e| GatewayError::Cassette(format!("{}: {e}", path.display())))?;
        let mut backend = Self::from_rules(script.rules, script.default);
        if let Some(dim) = script.embedding_dim {
            backend = backend.with_hashed_embeddings(dim);
        }
        Ok(backend)
    }

    pub fn with_embedder(
        mut self,
        embed: impl Fn(&EmbedRequest) -> Result<Vec<f32>, GatewayError> + Send + Sync + 'static,
    ) -> Self {
        self.embed = Some(Box::new(embed));
        self
    }

    pub fn with_hashed_embeddings(self, dim: usize) -> Self {
        self.with_embedder(move |req| Ok(hashed_embedding(&req.text, dim)))
    }
}

impl Backend for ScriptedBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let text = (self.chat)(request)?;
        Ok(ChatResponse {
            prompt_tokens: word_count(&request.rendered_prompt),
            completion_tokens: word_count(&text),
            text,
            latency_ms: 0,
        })
    }

    fn embed(&self, request: &EmbedRequest) -> Result<Vec<f32>, GatewayError> {
        match &self.embed {
            Some(embed) => embed(request),
            None => Err(GatewayError::Unsupported {
                backend: "scripted",
                operation: "embeddings",
            }),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct ScriptRule {
    #[serde(default)]
    pub prompt_id: Option<String>,
    #[serde(default)]
    pub contains: Option<String>,
    pub response: String,
}

impl ScriptRule {
    fn matches(&self, request: &ChatRequest) -> bool {
        self.prompt_id
            .as_deref()
            .is_none_or(|id| id == request.prompt_id)
            && self
                .contains
                .as_deref()
                .is_none_or(|needle| request.rendered_prompt.contains(needle))
    }
}

#[derive(Debug, Deserialize)]
struct ScriptFile {
    #[serde(default)]
    rules: Vec<ScriptRule>,
    #[serde(default)]
    default: Option<String>,
    #[serde(default)]
    embedding_dim: Option<usize>,
}

fn word_count(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Signed feature hashing of lowercase alphanumeric words into `dim` buckets.
/// Deterministic across platforms; texts without words map to the zero vector.
pub fn hashed_embedding(text: &str, dim: usize) -> Vec<f32> {
    let mut vector = vec![0.0f32; dim];
    if dim == 0 {
        return vector;
    }
    for word in text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
    {
        let digest = Sha256::digest(word.to_lowercase().as_bytes());
        let mut bucket = [0u8; 8];
        bucket.copy_from_slice(&digest[..8]);
        let slot = (u64::from_le_bytes(bucket) % dim as u64) as usize;
        vector[slot] += if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
    }
    vector
}
