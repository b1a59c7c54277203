//! Vanilla retrieval baseline: fixed-size overlapping chunks, embedding
//! index, cosine top-k retrieval and a short answer from the retrieved text.

use std::fs;
use std::io;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Gateway, GatewayError};
use crate::prompts;
use crate::reader::{is_not_found, NOT_FOUND_ANSWER};
use crate::trace::{CallInfo, Traced};

pub const DEFAULT_CHUNK_SIZE: usize = 500;
pub const DEFAULT_OVERLAP: usize = 50;
pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Error)]
pub enum RagError {
    #[error("chunk size ({chunk_size}) must exceed overlap ({overlap})")]
    BadChunking { chunk_size: usize, overlap: usize },
    #[error("top-k must be at least 1")]
    ZeroK,
    #[error("index is empty")]
    EmptyIndex,
    #[error("no chunks to answer from")]
    NoChunks,
    #[error("chunk {chunk_id}: embedding has zero length and cannot be normalized")]
    ZeroVector { chunk_id: usize },
    #[error("chunk {chunk_id}: embedding has {got} dimensions, expected {expected}")]
    DimensionMismatch {
        chunk_id: usize,
        expected: usize,
        got: usize,
    },
    #[error("query embedding has zero length")]
    ZeroQuery,
    #[error("query embedding has {got} dimensions, index has {expected}")]
    QueryDimension { expected: usize, got: usize },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: corrupt index: {message}")]
    Corrupt { path: PathBuf, message: String },
}

/// Splits text into token byte ranges.
pub trait Tokenizer {
    fn tokenize(&self, text: &str) -> Vec<Range<usize>>;
}

/// Whitespace-delimited words.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn tokenize(&self, text: &str) -> Vec<Range<usize>> {
        let mut tokens = Vec::new();
        let mut start = None;
        for (i, c) in text.char_indices() {
            match (c.is_whitespace(), start) {
                (true, Some(s)) => {
                    tokens.push(s..i);
                    start = None;
                }
                (false, None) => start = Some(i),
                _ => {}
            }
        }
        if let Some(s) = start {
            tokens.push(s..text.len());
        }
        tokens
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: usize,
    /// Token offsets, end exclusive.
    pub token_span: (usize, usize),
    /// Source text from the first token's start to the last token's end.
    pub text: String,
}

pub fn chunk_text(text: &str, chunk_size: usize, overlap: usize) -> Result<Vec<Chunk>, RagError> {
    chunk_text_with(&WhitespaceTokenizer, text, chunk_size, overlap)
}

/// Fixed-size chunks whose starts advance by `chunk_size - overlap` tokens.
/// The last chunk is the first one that reaches the end of the text.
pub fn chunk_text_with(
    tokenizer: &dyn Tokenizer,
    text: &str,
    chunk_size: usize,
    overlap: usize,
) -> Result<Vec<Chunk>, RagError> {
    if chunk_size == 0 || chunk_size <= overlap {
        return Err(RagError::BadChunking {
            chunk_size,
            overlap,
        });
    }
    let tokens = tokenizer.tokenize(text);
    let stride = chunk_size - overlap;
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < tokens.len() {
        let end = (start + chunk_size).min(tokens.len());
        chunks.push(Chunk {
            chunk_id: chunks.len(),
            token_span: (start, end),
            text: text[tokens[start].start..tokens[end - 1].end].to_string(),
        });
        if end == tokens.len() {
            break;
        }
        start += stride;
    }
    Ok(chunks)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    pub dim: usize,
    /// Unit-length vectors, parallel to `chunks`.
    pub vectors: Vec<Vec<f32>>,
    pub chunk_refs: Vec<usize>,
    pub chunks: Vec<Chunk>,
}

fn normalized(vector: &[f32]) -> Option<Vec<f32>> {
    let norm = vector
        .iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    Some(
        vector
            .iter()
            .map(|&x| (f64::from(x) / norm) as f32)
            .collect(),
    )
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// Cosine similarity; 0 when either vector has zero length.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let norms = (dot(a, a) * dot(b, b)).sqrt();
    if norms == 0.0 {
        0.0
    } else {
        (dot(a, b) / norms).clamp(-1.0, 1.0)
    }
}

impl EmbeddingIndex {
    /// Build from raw (not necessarily normalized) vectors, one per chunk.
    pub fn from_vectors(chunks: Vec<Chunk>, raw: Vec<Vec<f32>>) -> Result<Self, RagError> {
        let dim = raw.first().map_or(0, Vec::len);
        let mut vectors = Vec::with_capacity(raw.len());
        for (chunk, vector) in chunks.iter().zip(&raw) {
            if vector.len() != dim {
                return Err(RagError::DimensionMismatch {
                    chunk_id: chunk.chunk_id,
                    expected: dim,
                    got: vector.len(),
                });
            }
            vectors.push(normalized(vector).ok_or(RagError::ZeroVector {
                chunk_id: chunk.chunk_id,
            })?);
        }
        Ok(Self {
            dim,
            chunk_refs: chunks.iter().map(|c| c.chunk_id).collect(),
            vectors,
            chunks,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Indices and similarities of the `k` best vectors for `query`, best
    /// first; equal similarities keep the lower chunk id first.
    pub fn top_k(&self, query: &[f32], k: usize) -> Result<Vec<(usize, f64)>, RagError> {
        if k == 0 {
            return Err(RagError::ZeroK);
        }
        if self.is_empty() {
            return Err(RagError::EmptyIndex);
        }
        if query.len() != self.dim {
            return Err(RagError::QueryDimension {
                expected: self.dim,
                got: query.len(),
            });
        }
        let query = normalized(query).ok_or(RagError::ZeroQuery)?;
        let mut scored: Vec<(usize, f64)> = self
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| (i, dot(v, &query)))
            .collect();
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then(self.chunk_refs[a.0].cmp(&self.chunk_refs[b.0]))
        });
        scored.truncate(k);
        Ok(scored)
    }

    fn sidecar_path(path: &Path) -> PathBuf {
        path.with_extension("json")
    }

    /// Write the vectors as little-endian `u32 dim`, `u32 count`, then
    /// `count * dim` `f32` values; chunk spans go to a `.json` sidecar next
    /// to it.
    pub fn save(&self, path: &Path) -> Result<(), RagError> {
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| RagError::Io { path, source }
        };
        let mut bytes = Vec::with_capacity(8 + 4 * self.dim * self.len());
        bytes.extend((self.dim as u32).to_le_bytes());
        bytes.extend((self.len() as u32).to_le_bytes());
        for vector in &self.vectors {
            for value in vector {
                bytes.extend(value.to_le_bytes());
            }
        }
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(path, bytes).map_err(io_err(path))?;
        let sidecar = Self::sidecar_path(path);
        let json = serde_json::to_string_pretty(&self.chunks).expect("chunks serialize");
        fs::write(&sidecar, json).map_err(io_err(&sidecar))
    }

    pub fn load(path: &Path) -> Result<Self, RagError> {
        let corrupt = |message: String| RagError::Corrupt {
            path: path.to_path_buf(),
            message,
        };
        let bytes = fs::read(path).map_err(|source| RagError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let word = |at: usize| -> Option<[u8; 4]> { bytes.get(at..at + 4)?.try_into().ok() };
        let (dim, count) = match (word(0), word(4)) {
            (Some(d), Some(c)) => (
                u32::from_le_bytes(d) as usize,
                u32::from_le_bytes(c) as usize,
            ),
            _ => return Err(corrupt("missing header".into())),
        };
        if bytes.len() != 8 + 4 * dim * count {
            return Err(corrupt(format!(
                "expected {} bytes for {count} vectors of {dim}, found {}",
                8 + 4 * dim * count,
                bytes.len()
            )));
        }
        let values: Vec<f32> = bytes[8..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4-byte chunk")))
            .collect();
        let vectors: Vec<Vec<f32>> = if dim == 0 {
            vec![Vec::new(); count]
        } else {
            values.chunks(dim).map(<[f32]>::to_vec).collect()
        };
        let sidecar = Self::sidecar_path(path);
        let raw = fs::read_to_string(&sidecar).map_err(|source| RagError::Io {
            path: sidecar.clone(),
            source,
        })?;
        let chunks: Vec<Chunk> = serde_json::from_str(&raw).map_err(|e| RagError::Corrupt {
            path: sidecar,
            message: e.to_string(),
        })?;
        if chunks.len() != count {
            return Err(corrupt(format!(
                "{count} vectors but {} chunks",
                chunks.len()
            )));
        }
        Ok(Self {
            dim,
            chunk_refs: chunks.iter().map(|c| c.chunk_id).collect(),
            vectors,
            chunks,
        })
    }
}

/// Embed every chunk through the gateway and build a normalized index.
pub fn build_index(chunks: Vec<Chunk>, gateway: &Gateway) -> Result<EmbeddingIndex, RagError> {
    let raw = chunks
        .iter()
        .map(|c| gateway.embed(&c.text))
        .collect::<Result<Vec<_>, _>>()?;
    EmbeddingIndex::from_vectors(chunks, raw)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieved {
    pub chunk: Chunk,
    pub similarity: f64,
}

pub fn retrieve_topk(
    question: &str,
    index: &EmbeddingIndex,
    gateway: &Gateway,
    k: usize,
) -> Result<Vec<Retrieved>, RagError> {
    if k == 0 {
        return Err(RagError::ZeroK);
    }
    if index.is_empty() {
        return Err(RagError::EmptyIndex);
    }
    let query = gateway.embed(question)?;
    Ok(index
        .top_k(&query, k)?
        .into_iter()
        .map(|(i, similarity)| Retrieved {
            chunk: index.chunks[i].clone(),
            similarity,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RagAnswer {
    pub text: String,
    pub insufficient: bool,
}

/// Short answer conditioned only on `chunks` and the question.
pub fn answer_rag(
    chunks: &[Chunk],
    question: &str,
    gateway: &Gateway,
) -> Result<Traced<RagAnswer>, RagError> {
    if chunks.is_empty() {
        return Err(RagError::NoChunks);
    }
    let context = chunks
        .iter()
        .map(|c| format!("[Excerpt {}]\n{}", c.chunk_id + 1, c.text))
        .collect::<Vec<_>>()
        .join("\n\n");
    let rendered = prompts::render(
        prompts::RAG_ANSWER,
        &[("QUESTION", question), ("CONTEXT", &context)],
    )
    .expect("rag prompt placeholders are supplied");
    let request = gateway.request(prompts::RAG_ANSWER, rendered);
    let response = gateway.complete(&request)?;
    let text = response.text.trim().to_string();
    let mut out = Traced::new(if is_not_found(&text) {
        RagAnswer {
            text: NOT_FOUND_ANSWER.to_string(),
            insufficient: true,
        }
    } else {
        RagAnswer {
            text,
            insufficient: false,
        }
    });
    out.calls.push(CallInfo::new(&request, Some(&response)));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RagConfig {
    pub chunk_size: usize,
    pub overlap: usize,
    pub top_k: usize,
}

impl Default for RagConfig {
    fn default() -> Self {
        Self {
            chunk_size: DEFAULT_CHUNK_SIZE,
            overlap: DEFAULT_OVERLAP,
            top_k: DEFAULT_TOP_K,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RagRun {
    pub answer: RagAnswer,
    pub retrieved: Vec<Retrieved>,
    pub index: EmbeddingIndex,
    pub tokens: u64,
}

/// Chunk, index, retrieve and answer in one go. `embedder` supplies the
/// vectors and `generator` writes the answer.
pub fn run_rag(
    text: &str,
    question: &str,
    config: &RagConfig,
    embedder: &Gateway,
    generator: &Gateway,
) -> Result<RagRun, RagError> {
    let chunks = chunk_text(text, config.chunk_size, config.overlap)?;
    let index = build_index(chunks, embedder)?;
    let retrieved = retrieve_topk(question, &index, embedder, config.top_k)?;
    let context: Vec<Chunk> = retrieved.iter().map(|r| r.chunk.clone()).collect();
    let answer = answer_rag(&context, question, generator)?;
    Ok(RagRun {
        tokens: answer.tokens(),
        answer: answer.value,
        retrieved,
        index,
    })
}
