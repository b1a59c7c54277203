//! Batch evaluation with a bounded worker pool.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{map_answer, score, BenchError, BenchItem, Label, MappedLabel, ScoreReport};
use crate::document::{load_paper, Document};
use crate::gateway::Gateway;
use crate::ranking::Query;
use crate::reader::{run_pipeline, PipelineConfig};
use crate::trace::RunTrace;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemResult {
    pub id: String,
    pub short_answer: String,
    pub mapped_label: Label,
    pub fallback_used: bool,
    pub correct: bool,
    pub iterations: usize,
    /// Tokens spent by the answering pipeline (mapping excluded).
    pub tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ItemResult {
    pub fn mapped(&self) -> MappedLabel {
        MappedLabel {
            label: self.mapped_label,
            fallback_used: self.fallback_used,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub pipeline: PipelineConfig,
    pub workers: usize,
    /// One `<item id>.jsonl` trace per item is written here when set.
    pub trace_dir: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            workers: 1,
            trace_dir: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub results: Vec<ItemResult>,
    pub report: ScoreReport,
    /// Pipeline traces in item order; empty traces for items that failed
    /// before the pipeline ran.
    pub traces: Vec<RunTrace>,
}

const PAPER_EXTENSIONS: [&str; 3] = ["md", "markdown", "pdf"];

fn resolve_paper(papers_dir: &Path, paper_id: &str) -> Option<PathBuf> {
    PAPER_EXTENSIONS
        .iter()
        .map(|ext| papers_dir.join(format!("{paper_id}.{ext}")))
        .find(|p| p.is_file())
}

fn load_item_paper(papers_dir: &Path, paper_id: &str) -> Result<Document, String> {
    let path = resolve_paper(papers_dir, paper_id)
        .ok_or_else(|| format!("no paper file for `{paper_id}`"))?;
    let doc = load_paper(&path).map_err(|e| e.to_string())?;
    Ok(Document {
        doc_id: paper_id.to_string(),
        ..doc
    })
}

/// File-system safe name for an item's trace file.
pub fn trace_file_name(item_id: &str) -> String {
    let safe: String = item_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}.jsonl")
}

fn evaluate(
    item: &BenchItem,
    papers_dir: &Path,
    config: &BenchConfig,
    backbone: &Gateway,
    mapper: &Gateway,
) -> (ItemResult, RunTrace) {
    let fallback = |error: String| {
        tracing::warn!(item = %item.item_id, "{error}; scoring as fallback");
        let mapped = MappedLabel::fallback(item);
        ItemResult {
            id: item.item_id.clone(),
            short_answer: String::new(),
            mapped_label: mapped.label,
            fallback_used: true,
            correct: mapped.label == item.gold,
            iterations: 0,
            tokens: 0,
            error: Some(error),
        }
    };
    let doc = match load_item_paper(papers_dir, &item.paper_id) {
        Ok(doc) => doc,
        Err(e) => return (fallback(e), RunTrace::default()),
    };
    let query = match Query::new(item.question.clone()) {
        Ok(q) => Query {
            domain_tag: Some(item.domain.to_string()),
            category: Some(item.category.to_string()),
            ..q
        },
        Err(e) => return (fallback(e.to_string()), RunTrace::default()),
    };
    let (answer, mut trace) = match run_pipeline(&doc, &query, &config.pipeline, backbone) {
        Ok(run) => run,
        Err(e) => return (fallback(e.to_string()), RunTrace::default()),
    };
    let mapped = map_answer(&answer.text, item, mapper);
    if let Some(last) = trace.records.last_mut() {
        last.warnings.extend(mapped.warnings.iter().cloned());
    }
    let result = ItemResult {
        id: item.item_id.clone(),
        short_answer: answer.text,
        mapped_label: mapped.value.label,
        fallback_used: mapped.value.fallback_used,
        correct: mapped.value.label == item.gold,
        iterations: answer.iterations,
        tokens: answer.usage.tokens,
        error: answer.error,
    };
    (result, trace)
}

fn write_trace(dir: &Path, item_id: &str, trace: &RunTrace) -> std::io::Result<()> {
    fs::write(dir.join(trace_file_name(item_id)), trace.to_jsonl())
}

/// Run the answering pipeline on every item with `backbone`, map answers
/// with `mapper`, and score. Per-item failures are scored as fallback and
/// never abort the batch. Results come back in item order regardless of
/// worker count.
pub fn run_benchmark(
    items: &[BenchItem],
    papers_dir: &Path,
    config: &BenchConfig,
    backbone: &Gateway,
    mapper: &Gateway,
) -> Result<BenchOutcome, BenchError> {
    if let Some(dir) = &config.trace_dir {
        fs::create_dir_all(dir).map_err(|source| BenchError::Io {
            path: dir.clone(),
            source,
        })?;
    }
    let slots: Vec<Mutex<Option<(ItemResult, RunTrace)>>> =
        items.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = config.workers.clamp(1, items.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                let Some(item) = items.get(index) else { break };
                let (result, trace) = evaluate(item, papers_dir, config, backbone, mapper);
                if let Some(dir) = &config.trace_dir {
                    if let Err(e) = write_trace(dir, &item.item_id, &trace) {
                        tracing::warn!(item = %item.item_id, "could not write trace: {e}");
                    }
                }
                *slots[index].lock().expect("slot lock") = Some((result, trace));
            });
        }
    });

    let (results, traces): (Vec<ItemResult>, Vec<RunTrace>) = slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("slot lock")
                .expect("every item evaluated")
        })
        .unzip();
    let mapped: Vec<(String, MappedLabel)> =
        results.iter().map(|r| (r.id.clone(), r.mapped())).collect();
    let report = score(&mapped, items)?;
    Ok(BenchOutcome {
        results,
        report,
        traces,
    })
}

/// Map stored short answers again with a different mapper. Pipelines are
/// not re-run; iterations and tokens are carried over.
pub fn remap_results(
    results: &[ItemResult],
    items: &[BenchItem],
    mapper: &Gateway,
) -> Result<(Vec<ItemResult>, ScoreReport), BenchError> {
    let mut remapped = Vec::with_capacity(results.len());
    for result in results {
        let item = items
            .iter()
            .find(|i| i.item_id == result.id)
            .ok_or_else(|| BenchError::UnknownItem(result.id.clone()))?;
        let mapped = map_answer(&result.short_answer, item, mapper).value;
        remapped.push(ItemResult {
            mapped_label: mapped.label,
            fallback_used: mapped.fallback_used,
            correct: mapped.label == item.gold,
            ..result.clone()
        });
    }
    let mapped: Vec<(String, MappedLabel)> = remapped
        .iter()
        .map(|r| (r.id.clone(), r.mapped()))
        .collect();
    let report = score(&mapped, items)?;
    Ok((remapped, report))
}

pub fn results_to_json(results: &[ItemResult]) -> String {
    let mut out = serde_json::to_string_pretty(results).expect("results serialize");
    out.push('\n');
    out
}

pub fn load_results(path: &Path) -> Result<Vec<ItemResult>, BenchError> {
    let raw = fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&raw).map_err(|e| BenchError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
