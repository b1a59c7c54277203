//! Iterative reading over ranked sections.
//!
//! The loop is a fixed cycle: access the next ranked section, extract
//! sentence-anchored details from it, then ask whether everything gathered
//! so far answers the question. A `YES` stops reading; otherwise the next
//! section is read until the sections (or the iteration cap) run out. The
//! final answer is synthesized from the accumulated details only.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::document::{split_sentences, Document};
use crate::gateway::Gateway;
use crate::hierarchy::{infer_tree, prune_and_label, HierarchyError};
use crate::prompts;
use crate::ranking::{rank_sections, reorder, Query, RankingError, ReorderedSections};
use crate::trace::{Action, CallInfo, RunTrace, Traced};

pub use crate::trace::Verdict;

/// Answer text used whenever the paper does not support an answer.
pub const NOT_FOUND_ANSWER: &str = "The information was not found in the paper.";
/// Sentinel the synthesis prompts ask the model to emit when unsupported.
pub const NOT_FOUND_SENTINEL: &str = "NOT_FOUND";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("document `{0}` has no sections to read")]
    NoSections(String),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Ranking(#[from] RankingError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfidenceLevel {
    Conservative,
    #[default]
    Balanced,
    Aggressive,
}

impl ConfidenceLevel {
    pub const ALL: [ConfidenceLevel; 3] = [
        ConfidenceLevel::Conservative,
        ConfidenceLevel::Balanced,
        ConfidenceLevel::Aggressive,
    ];

    pub fn sufficiency_prompt(self) -> &'static str {
        match self {
            ConfidenceLevel::Conservative => "sufficiency-1",
            ConfidenceLevel::Balanced => "sufficiency-2",
            ConfidenceLevel::Aggressive => "sufficiency-3",
        }
    }

    pub fn instructions_prompt(self) -> &'static str {
        match self {
            ConfidenceLevel::Conservative => "loop-instructions-1",
            ConfidenceLevel::Balanced => "loop-instructions-2",
            ConfidenceLevel::Aggressive => "loop-instructions-3",
        }
    }
}

impl fmt::Display for ConfidenceLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConfidenceLevel::Conservative => "conservative",
            ConfidenceLevel::Balanced => "balanced",
            ConfidenceLevel::Aggressive => "aggressive",
        })
    }
}

impl FromStr for ConfidenceLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "conservative" | "1" => Ok(ConfidenceLevel::Conservative),
            "balanced" | "2" => Ok(ConfidenceLevel::Balanced),
            "aggressive" | "3" => Ok(ConfidenceLevel::Aggressive),
            other => Err(format!(
                "unknown confidence level `{other}` (expected conservative, balanced or aggressive)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detail {
    pub fact: String,
    /// Verbatim text of the section body, widened to whole sentences.
    pub anchor_sentence: String,
    pub section_label: String,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadingState {
    /// 1-based index of the next section to read.
    pub cursor: usize,
    pub memory: Vec<Detail>,
    pub iterations_done: usize,
    pub verdict_history: Vec<Verdict>,
}

impl Default for ReadingState {
    fn default() -> Self {
        Self {
            cursor: 1,
            memory: Vec::new(),
            iterations_done: 0,
            verdict_history: Vec::new(),
        }
    }
}

/// Next section in ranked order, advancing the cursor; `None` once all
/// sections have been handed out.
pub fn next_section<'a>(
    state: &mut ReadingState,
    sections: &'a ReorderedSections,
) -> Option<&'a (String, String)> {
    let item = sections.items.get(state.cursor.checked_sub(1)?)?;
    state.cursor += 1;
    Some(item)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub tokens: u64,
    pub model_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub supporting: Vec<Detail>,
    pub iterations: usize,
    pub insufficient: bool,
    pub usage: Usage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Answer {
    fn not_found(supporting: Vec<Detail>) -> Self {
        Self {
            text: NOT_FOUND_ANSWER.to_string(),
            supporting,
            iterations: 0,
            insufficient: true,
            usage: Usage::default(),
            error: None,
        }
    }

    /// Every supporting anchor occurs verbatim in `source`.
    pub fn is_grounded_in(&self, source: &str) -> bool {
        self.supporting
            .iter()
            .all(|d| !d.anchor_sentence.is_empty() && source.contains(&d.anchor_sentence))
    }
}

#[derive(Debug, Deserialize)]
struct ClaimedDetail {
    #[serde(default)]
    fact: String,
    #[serde(alias = "anchor", alias = "anchor_sentence", alias = "quote")]
    sentence: String,
}

/// Extract details relevant to `query` from one section. Claimed sentences
/// that do not occur verbatim in the body are rejected. Empty bodies are
/// skipped without a model call.
pub fn extract_details(
    section: (&str, &str),
    query: &Query,
    iteration: usize,
    gateway: &Gateway,
) -> Traced<Vec<Detail>> {
    let (label, body) = section;
    let mut out = Traced::new(Vec::new());
    if body.trim().is_empty() {
        return out;
    }
    let rendered = match prompts::render(
        prompts::GET_DETAIL,
        &[
            ("QUESTION", &query.question),
            ("SECTION_LABEL", label),
            ("SECTION_TEXT", body),
        ],
    ) {
        Ok(text) => text,
        Err(err) => {
            out.warn(format!("detail prompt failed to render: {err}"));
            return out;
        }
    };
    let request = gateway.request(prompts::GET_DETAIL, rendered);
    let response = match gateway.complete(&request) {
        Ok(response) => response,
        Err(err) => {
            out.calls.push(CallInfo::new(&request, None));
            out.warn(format!("detail extraction failed for `{label}`: {err}"));
            return out;
        }
    };
    out.calls.push(CallInfo::new(&request, Some(&response)));
    let claims = match parse_claims(&response.text) {
        Ok(claims) => claims,
        Err(err) => {
            out.warn(format!(
                "detail reply for `{label}` is not a JSON array: {err}"
            ));
            return out;
        }
    };
    let sentences = split_sentences(body);
    for claim in claims {
        match anchor_in(body, &claim.sentence, &sentences) {
            Some(anchor) => out.value.push(Detail {
                fact: if claim.fact.trim().is_empty() {
                    anchor.to_string()
                } else {
                    claim.fact.trim().to_string()
                },
                anchor_sentence: anchor.to_string(),
                section_label: label.to_string(),
                iteration,
            }),
            None => out.warn(format!(
                "rejected detail from `{label}`: sentence not in section: {:?}",
                claim.sentence
            )),
        }
    }
    out
}

fn parse_claims(reply: &str) -> Result<Vec<ClaimedDetail>, String> {
    let start = reply.find('[').ok_or("no `[` found")?;
    let end = reply
        .rfind(']')
        .filter(|&e| e > start)
        .ok_or("no closing `]` found")?;
    serde_json::from_str(&reply[start..=end]).map_err(|e| e.to_string())
}

/// Locate `claimed` in `body` and widen it to the sentences it touches.
fn anchor_in<'b>(
    body: &'b str,
    claimed: &str,
    sentences: &[std::ops::Range<usize>],
) -> Option<&'b str> {
    let claimed = claimed.trim();
    if claimed.is_empty() {
        return None;
    }
    let start = body.find(claimed)?;
    let end = start + claimed.len();
    let touching = sentences.iter().filter(|s| s.start < end && start < s.end);
    let lo = touching
        .clone()
        .map(|s| s.start)
        .min()
        .unwrap_or(start)
        .min(start);
    let hi = touching.map(|s| s.end).max().unwrap_or(end).max(end);
    Some(&body[lo..hi])
}

fn format_details(memory: &[Detail]) -> String {
    memory
        .iter()
        .enumerate()
        .map(|(i, d)| {
            format!(
                "{}. [{}] {}\n   Source sentence: \"{}\"",
                i + 1,
                d.section_label,
                d.fact,
                d.anchor_sentence
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Decide whether `memory` answers `query`. Anything short of a definitive
/// final YES counts as NO, including backend failures.
pub fn check_sufficiency(
    memory: &[Detail],
    query: &Query,
    level: ConfidenceLevel,
    gateway: &Gateway,
) -> Traced<Verdict> {
    let mut out = Traced::new(Verdict::No);
    if memory.is_empty() {
        return out;
    }
    let instructions = prompts::template(level.instructions_prompt()).unwrap_or_default();
    let details = format_details(memory);
    let prompt_id = level.sufficiency_prompt();
    let rendered = match prompts::render(
        prompt_id,
        &[
            ("QUESTION", &query.question),
            ("DETAILS", &details),
            ("INSTRUCTIONS", instructions.trim_end()),
        ],
    ) {
        Ok(text) => text,
        Err(err) => {
            out.warn(format!("sufficiency prompt failed to render: {err}"));
            return out;
        }
    };
    let request = gateway.request(prompt_id, rendered);
    match gateway.complete(&request) {
        Ok(response) => {
            out.calls.push(CallInfo::new(&request, Some(&response)));
            out.value = parse_verdict(&response.text);
        }
        Err(err) => {
            out.calls.push(CallInfo::new(&request, None));
            out.warn(format!(
                "sufficiency check failed: {err}; continuing to read"
            ));
        }
    }
    out
}

/// The last standalone YES or NO in the reply decides; neither means NO.
pub fn parse_verdict(reply: &str) -> Verdict {
    let last = reply
        .split(|c: char| !c.is_alphanumeric())
        .rfind(|w| w.eq_ignore_ascii_case("yes") || w.eq_ignore_ascii_case("no"));
    match last {
        Some(word) if word.eq_ignore_ascii_case("yes") => Verdict::Yes,
        _ => Verdict::No,
    }
}

/// Write the final answer from `memory` alone. With no details the
/// canonical not-found answer is returned without asking the model.
pub fn synthesize_answer(memory: &[Detail], query: &Query, gateway: &Gateway) -> Traced<Answer> {
    if memory.is_empty() {
        return Traced::new(Answer::not_found(Vec::new()));
    }
    synthesize_with_model(memory, query, gateway)
}

fn synthesize_with_model(memory: &[Detail], query: &Query, gateway: &Gateway) -> Traced<Answer> {
    let mut out = Traced::new(Answer::not_found(memory.to_vec()));
    let details = if memory.is_empty() {
        "(none)".to_string()
    } else {
        format_details(memory)
    };
    let rendered = match prompts::render(
        prompts::SYNTHESIZE,
        &[("QUESTION", &query.question), ("DETAILS", &details)],
    ) {
        Ok(text) => text,
        Err(err) => {
            out.value.error = Some(err.to_string());
            return out;
        }
    };
    let request = gateway.request(prompts::SYNTHESIZE, rendered);
    match gateway.complete(&request) {
        Ok(response) => {
            out.calls.push(CallInfo::new(&request, Some(&response)));
            let text = response.text.trim();
            if !is_not_found(text) {
                out.value.text = text.to_string();
                out.value.insufficient = false;
            }
        }
        Err(err) => {
            out.calls.push(CallInfo::new(&request, None));
            out.value.error = Some(err.to_string());
            out.warn(format!("answer synthesis failed: {err}"));
        }
    }
    out
}

pub fn is_not_found(text: &str) -> bool {
    let upper = text.to_ascii_uppercase();
    upper.contains(NOT_FOUND_SENTINEL) || (upper.contains("NOT FOUND") && upper.len() < 20)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub confidence: ConfidenceLevel,
    /// Cap on reading iterations; `None` means one per section.
    pub max_iterations: Option<usize>,
    /// Ablation switch. When off, a single section is read and the answer is
    /// synthesized without any evidence gate.
    pub sufficiency_check: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            confidence: ConfidenceLevel::Balanced,
            max_iterations: None,
            sufficiency_check: true,
        }
    }
}

impl PipelineConfig {
    pub fn with_confidence(mut self, confidence: ConfidenceLevel) -> Self {
        self.confidence = confidence;
        self
    }
}

/// Stable run identifier derived from the inputs.
pub fn run_id(
    document: &Document,
    query: &Query,
    config: &PipelineConfig,
    model_id: &str,
) -> String {
    let mut hasher = Sha256::new();
    for part in [
        document.doc_id.as_str(),
        document.raw_markdown.as_str(),
        query.question.as_str(),
        &config.confidence.to_string(),
        &format!("{:?}/{}", config.max_iterations, config.sufficiency_check),
        model_id,
    ] {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hex::encode(hasher.finalize());
    format!("{}-{}", document.doc_id, &digest[..12])
}

/// Full pipeline: hierarchy, ranking, the reading loop and synthesis.
///
/// Model failures never abort the run; each step falls back as documented
/// on its function and the fallback is noted in the trace.
pub fn run_pipeline(
    document: &Document,
    query: &Query,
    config: &PipelineConfig,
    gateway: &Gateway,
) -> Result<(Answer, RunTrace), PipelineError> {
    if document.sections.is_empty() {
        return Err(PipelineError::NoSections(document.doc_id.clone()));
    }
    let mut trace = RunTrace::new(run_id(document, query, config, gateway.model_id()));

    let mut model_calls = 0;
    let tree = infer_tree(&document.headings(), &document.title, gateway);
    model_calls += tree.calls.len();
    trace.push(Action::Hierarchy, &tree);
    let filtered = prune_and_label(&tree.value, document)?;

    let ranked = rank_sections(&filtered, query, &document.title, gateway);
    model_calls += ranked.calls.len();
    trace.push(Action::Rank, &ranked);
    let sections = reorder(&filtered, &ranked.value)?;

    let cap = config
        .max_iterations
        .unwrap_or(usize::MAX)
        .min(sections.n());
    let mut state = ReadingState::default();
    while state.iterations_done < cap {
        let Some((label, body)) = next_section(&mut state, &sections) else {
            break;
        };
        let iteration = state.iterations_done + 1;
        trace.push(Action::Access, &Traced::new(())).section_label = Some(label.clone());

        let extracted = extract_details((label, body), query, iteration, gateway);
        model_calls += extracted.calls.len();
        let record = trace.push(Action::Extract, &extracted);
        record.section_label = Some(label.clone());
        record.detail_count = Some(extracted.value.len());
        state.memory.extend(extracted.value);
        state.iterations_done = iteration;

        if !config.sufficiency_check {
            break;
        }
        let verdict = check_sufficiency(&state.memory, query, config.confidence, gateway);
        model_calls += verdict.calls.len();
        let record = trace.push(Action::Check, &verdict);
        record.section_label = Some(label.clone());
        record.verdict = Some(verdict.value);
        record.detail_count = Some(state.memory.len());
        state.verdict_history.push(verdict.value);
        if verdict.value == Verdict::Yes {
            break;
        }
    }

    let synthesized = if config.sufficiency_check {
        synthesize_answer(&state.memory, query, gateway)
    } else {
        synthesize_with_model(&state.memory, query, gateway)
    };
    model_calls += synthesized.calls.len();
    let record = trace.push(Action::Synthesize, &synthesized);
    record.detail_count = Some(state.memory.len());

    let mut answer = synthesized.value;
    answer.iterations = state.iterations_done;
    answer.usage = Usage {
        tokens: trace.total_tokens(),
        model_calls,
    };
    Ok((answer, trace))
}
