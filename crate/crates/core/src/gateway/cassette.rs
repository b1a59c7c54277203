//! JSON-lines cassettes: recording a live backend and replaying it offline.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{
    Backend, BackendKind, ChatRequest, ChatResponse, EmbedRequest, Fingerprint, GatewayError,
};

/// One cassette line. Embedding entries carry `embedding` and an empty
/// `response_text`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: Fingerprint,
    pub response_text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f32>>,
}

#[derive(Debug, Clone, Default)]
pub struct Cassette {
    entries: HashMap<Fingerprint, CassetteEntry>,
}

impl Cassette {
    /// Parse a cassette file. When a fingerprint repeats, the first entry wins.
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let raw = fs::read_to_string(path)
            .map_err(|e| GatewayError::Cassette(format!("{}: {e}", path.display())))?;
        Self::parse(&raw).map_err(|e| GatewayError::Cassette(format!("{}: {e}", path.display())))
    }

    pub fn parse(raw: &str) -> Result<Self, String> {
        let mut entries = HashMap::new();
        for (lineno, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry =
                serde_json::from_str(line).map_err(|e| format!("line {}: {e}", lineno + 1))?;
            entries.entry(entry.fingerprint.clone()).or_insert(entry);
        }
        Ok(Self { entries })
    }

    pub fn get(&self, fingerprint: &Fingerprint) -> Option<&CassetteEntry> {
        self.entries.get(fingerprint)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Serves responses from a cassette and nothing else.
#[derive(Debug)]
pub struct ReplayBackend {
    cassette: Cassette,
}

impl ReplayBackend {
    pub fn new(cassette: Cassette) -> Self {
        Self { cassette }
    }

    pub fn open(path: &Path) -> Result<Self, GatewayError> {
        Ok(Self::new(Cassette::load(path)?))
    }
}

impl Backend for ReplayBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Replay
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let fingerprint = request.fingerprint();
        let entry = self
            .cassette
            .get(&fingerprint)
            .ok_or(GatewayError::ReplayMiss(fingerprint))?;
        Ok(ChatResponse {
            text: entry.response_text.clone(),
            prompt_tokens: entry.prompt_tokens,
            completion_tokens: entry.completion_tokens,
            latency_ms: 0,
        })
    }

    fn embed(&self, request: &EmbedRequest) -> Result<Vec<f32>, GatewayError> {
        let fingerprint = request.fingerprint();
        self.cassette
            .get(&fingerprint)
            .and_then(|entry| entry.embedding.clone())
            .ok_or(GatewayError::ReplayMiss(fingerprint))
    }
}

/// Forwards to an inner backend and appends every successful exchange to a
/// cassette file. Appends are serialized through a mutex.
pub struct RecordingBackend {
    inner: Arc<dyn Backend>,
    path: PathBuf,
    writer: Mutex<BufWriter<File>>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn Backend>, path: &Path) -> Result<Self, GatewayError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)
                .map_err(|e| GatewayError::Cassette(format!("{}: {e}", parent.display())))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| GatewayError::Cassette(format!("{}: {e}", path.display())))?;
        Ok(Self {
            inner,
            path: path.to_path_buf(),
            writer: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn append(&self, entry: &CassetteEntry) -> Result<(), GatewayError> {
        let line =
            serde_json::to_string(entry).map_err(|e| GatewayError::Cassette(e.to_string()))?;
        let mut writer = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        writeln!(writer, "{line}")
            .and_then(|_| writer.flush())
            .map_err(|e| GatewayError::Cassette(format!("{}: {e}", self.path.display())))
    }
}

impl Backend for RecordingBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Record
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let response = self.inner.complete(request)?;
        self.append(&CassetteEntry {
            fingerprint: request.fingerprint(),
            response_text: response.text.clone(),
            prompt_tokens: response.prompt_tokens,
            completion_tokens: response.completion_tokens,
            embedding: None,
        })?;
        Ok(response)
    }

    fn embed(&self, request: &EmbedRequest) -> Result<Vec<f32>, GatewayError> {
        let vector = self.inner.embed(request)?;
        self.append(&CassetteEntry {
            fingerprint: request.fingerprint(),
            response_text: String::new(),
            prompt_tokens: 0,
            completion_tokens: 0,
            embedding: Some(vector.clone()),
        })?;
        Ok(vector)
    }
}
