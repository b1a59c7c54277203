//! Run traces: one JSON line per pipeline action.

use serde::{Deserialize, Serialize};

use crate::gateway::{ChatRequest, ChatResponse, Fingerprint};

/// Result of one model-backed operation plus what it cost and any fallbacks
/// it took.
#[derive(Debug, Clone, PartialEq)]
pub struct Traced<T> {
    pub value: T,
    pub calls: Vec<CallInfo>,
    pub warnings: Vec<String>,
}

impl<T> Traced<T> {
    pub fn new(value: T) -> Self {
        Self {
            value,
            calls: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn tokens(&self) -> u64 {
        self.calls.iter().map(|c| c.tokens).sum()
    }

    pub fn latency_ms(&self) -> u64 {
        self.calls.iter().map(|c| c.latency_ms).sum()
    }

    pub fn last_fingerprint(&self) -> Option<&Fingerprint> {
        self.calls.last().map(|c| &c.fingerprint)
    }

    pub(crate) fn warn(&mut self, message: impl Into<String>) {
        let message = message.into();
        tracing::warn!("{message}");
        self.warnings.push(message);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallInfo {
    pub prompt_id: String,
    pub fingerprint: Fingerprint,
    pub tokens: u64,
    pub latency_ms: u64,
}

impl CallInfo {
    pub fn new(request: &ChatRequest, response: Option<&ChatResponse>) -> Self {
        Self {
            prompt_id: request.prompt_id.clone(),
            fingerprint: request.fingerprint(),
            tokens: response.map_or(0, ChatResponse::total_tokens),
            latency_ms: response.map_or(0, |r| r.latency_ms),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Hierarchy,
    Rank,
    Access,
    Extract,
    Check,
    Synthesize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Yes,
    No,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub run_id: String,
    pub step: usize,
    pub action: Action,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_fingerprint: Option<Fingerprint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail_count: Option<usize>,
    pub tokens: u64,
    /// Model time reported by the backend, not wall-clock time, so replayed
    /// runs produce identical traces.
    pub duration_ms: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunTrace {
    pub run_id: String,
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn new(run_id: impl Into<String>) -> Self {
        Self {
            run_id: run_id.into(),
            records: Vec::new(),
        }
    }

    pub(crate) fn push<T>(&mut self, action: Action, traced: &Traced<T>) -> &mut TraceRecord {
        let step = self.records.len() + 1;
        self.records.push(TraceRecord {
            run_id: self.run_id.clone(),
            step,
            action,
            section_label: None,
            prompt_fingerprint: traced.last_fingerprint().cloned(),
            verdict: None,
            detail_count: None,
            tokens: traced.tokens(),
            duration_ms: traced.latency_ms(),
            warnings: traced.warnings.clone(),
        });
        self.records.last_mut().expect("just pushed")
    }

    pub fn actions(&self) -> Vec<Action> {
        self.records.iter().map(|r| r.action).collect()
    }

    pub fn count(&self, action: Action) -> usize {
        self.records.iter().filter(|r| r.action == action).count()
    }

    pub fn total_tokens(&self) -> u64 {
        self.records.iter().map(|r| r.tokens).sum()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(raw: &str) -> Result<Self, serde_json::Error> {
        let records = raw
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<TraceRecord>, _>>()?;
        let run_id = records
            .first()
            .map(|r| r.run_id.clone())
            .unwrap_or_default();
        Ok(Self { run_id, records })
    }
}
