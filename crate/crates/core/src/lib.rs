//! Grounded question answering over a single scientific paper.
//!
//! The pipeline parses a Markdown paper into sections, recovers the heading
//! hierarchy, asks a model to rank sections by how likely they are to answer
//! the question, then reads them in that order, extracting sentence-anchored
//! details until a sufficiency check says the evidence is enough. The final
//! answer is synthesized from those details alone.
//!
//! Alongside the pipeline live a benchmark harness (multiple-choice mapping,
//! per-domain and macro accuracy, paired signed-rank tests) and a vanilla
//! chunk-and-embed RAG baseline for comparison.

pub mod bench;
pub mod document;
pub mod gateway;
pub mod hierarchy;
pub mod prompts;
pub mod rag;
pub mod ranking;
pub mod reader;
mod sentences;
pub mod trace;

pub use document::{parse_markdown, Document, RawSection};
pub use gateway::{Backend, ChatRequest, ChatResponse, Gateway, GatewayError};
pub use ranking::Query;
pub use reader::{run_pipeline, Answer, ConfidenceLevel, PipelineConfig};
pub use trace::{RunTrace, Verdict};
