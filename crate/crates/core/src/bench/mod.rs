//! Benchmark harness: six-choice items, answer-to-choice mapping, scoring,
//! and paired significance testing.

mod report;
mod run;
pub mod stats;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::gateway::Gateway;
use crate::prompts;
use crate::trace::{CallInfo, Traced};

pub use report::{report_csv, report_markdown};
pub use run::{
    load_results, remap_results, results_to_json, run_benchmark, trace_file_name, BenchConfig,
    BenchOutcome, ItemResult,
};
pub use stats::{
    holm_bonferroni, median, paired_family, wilcoxon_signed_rank, FamilyRow, PairedStats,
    SignedRank, StatsError,
};

pub const ALL_OF_THE_ABOVE: &str = "All of the above";
pub const NONE_OF_THE_ABOVE: &str = "None of the above";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a JSON array of items: {message}")]
    Format { path: PathBuf, message: String },
    #[error("item `{item_id}`, field `{field}`: {message}")]
    Schema {
        item_id: String,
        field: String,
        message: String,
    },
    #[error("result for unknown item `{0}`")]
    UnknownItem(String),
    #[error("more than one result for item `{0}`")]
    DuplicateResult(String),
    #[error("no result for item `{0}`")]
    MissingResult(String),
    #[error("no items to score")]
    Empty,
}

macro_rules! string_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.as_str() == s)
                    .ok_or_else(|| {
                        let names: Vec<_> = $name::ALL.iter().map(|v| v.as_str()).collect();
                        format!("`{s}` is not one of {}", names.join(", "))
                    })
            }
        }
    };
}

string_enum!(Domain {
    Physics => "physics",
    PublicHealth => "public-health",
    EarthScience => "earth-science",
    Engineering => "engineering",
    MaterialScience => "material-science",
});

string_enum!(Category {
    SubjectAndSetup => "subject-and-setup",
    DataAndCollection => "data-and-collection",
    ApproachAndDetails => "approach-and-details",
    ConclusionsAndResults => "conclusions-and-results",
});

string_enum!(Label {
    A => "A",
    B => "B",
    C => "C",
    D => "D",
    E => "E",
    F => "F",
});

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchItem {
    #[serde(rename = "id")]
    pub item_id: String,
    pub domain: Domain,
    pub category: Category,
    pub paper_id: String,
    pub question: String,
    pub choices: BTreeMap<Label, String>,
    pub gold: Label,
}

fn normalized_choice(text: &str) -> String {
    text.trim().trim_end_matches('.').to_ascii_lowercase()
}

impl BenchItem {
    fn label_of(&self, text: &str) -> Option<Label> {
        let wanted = normalized_choice(text);
        self.choices
            .iter()
            .find(|(_, choice)| normalized_choice(choice) == wanted)
            .map(|(&label, _)| label)
    }

    /// Label of the "None of the above" option; used as the mapping fallback.
    pub fn none_label(&self) -> Label {
        self.label_of(NONE_OF_THE_ABOVE)
            .expect("validated items carry a None of the above option")
    }

    pub fn all_label(&self) -> Label {
        self.label_of(ALL_OF_THE_ABOVE)
            .expect("validated items carry an All of the above option")
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let schema = |field: &str, message: String| BenchError::Schema {
            item_id: self.item_id.clone(),
            field: field.to_string(),
            message,
        };
        if self.item_id.trim().is_empty() {
            return Err(schema("id", "must not be empty".into()));
        }
        for (field, value) in [("paper_id", &self.paper_id), ("question", &self.question)] {
            if value.trim().is_empty() {
                return Err(schema(field, "must not be empty".into()));
            }
        }
        if self.choices.len() != 6 {
            return Err(schema(
                "choices",
                format!(
                    "expected exactly six choices A-F, found {}",
                    self.choices.len()
                ),
            ));
        }
        if let Some((label, _)) = self.choices.iter().find(|(_, c)| c.trim().is_empty()) {
            return Err(schema("choices", format!("choice {label} is empty")));
        }
        for required in [ALL_OF_THE_ABOVE, NONE_OF_THE_ABOVE] {
            if self.label_of(required).is_none() {
                return Err(schema(
                    "choices",
                    format!("missing a \"{required}\" option"),
                ));
            }
        }
        Ok(())
    }
}

/// Load and validate a benchmark file (a JSON array of items).
pub fn load_benchmark(path: &Path) -> Result<Vec<BenchItem>, BenchError> {
    let raw = fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_benchmark(&raw).map_err(|err| match err {
        BenchError::Format { message, .. } => BenchError::Format {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

pub fn parse_benchmark(raw: &str) -> Result<Vec<BenchItem>, BenchError> {
    let format = |message: String| BenchError::Format {
        path: PathBuf::new(),
        message,
    };
    let values: Vec<Value> = serde_json::from_str(raw).map_err(|e| format(e.to_string()))?;
    let mut seen = HashSet::new();
    let mut items = Vec::with_capacity(values.len());
    for (position, value) in values.into_iter().enumerate() {
        let item = item_from_value(position, value)?;
        if !seen.insert(item.item_id.clone()) {
            return Err(BenchError::Schema {
                item_id: item.item_id,
                field: "id".into(),
                message: "duplicate id".into(),
            });
        }
        items.push(item);
    }
    Ok(items)
}

fn item_from_value(position: usize, value: Value) -> Result<BenchItem, BenchError> {
    let item_id = value
        .get("id")
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| format!("#{}", position + 1));
    let schema = |field: &str, message: String| BenchError::Schema {
        item_id: item_id.clone(),
        field: field.to_string(),
        message,
    };
    let Value::Object(map) = value else {
        return Err(schema("id", "item is not a JSON object".into()));
    };
    let text = |field: &str| -> Result<String, BenchError> {
        match map.get(field) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(schema(field, "must be a string".into())),
            None => Err(schema(field, "missing".into())),
        }
    };

    let id = text("id")?;
    let domain = text("domain")?
        .parse::<Domain>()
        .map_err(|m| schema("domain", m))?;
    let category = text("category")?
        .parse::<Category>()
        .map_err(|m| schema("category", m))?;
    let gold = text("gold")?
        .parse::<Label>()
        .map_err(|m| schema("gold", m))?;
    let choices = match map.get("choices") {
        Some(Value::Object(raw)) => {
            let mut choices = BTreeMap::new();
            for (key, value) in raw {
                let label = key.parse::<Label>().map_err(|m| schema("choices", m))?;
                let text = value
                    .as_str()
                    .ok_or_else(|| schema("choices", format!("choice {key} must be a string")))?;
                choices.insert(label, text.to_string());
            }
            choices
        }
        Some(_) => return Err(schema("choices", "must be an object keyed A-F".into())),
        None => return Err(schema("choices", "missing".into())),
    };
    let item = BenchItem {
        item_id: id,
        domain,
        category,
        paper_id: text("paper_id")?,
        question: text("question")?,
        choices,
        gold,
    };
    item.validate()?;
    Ok(item)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappedLabel {
    pub label: Label,
    pub fallback_used: bool,
}

impl MappedLabel {
    pub fn fallback(item: &BenchItem) -> Self {
        Self {
            label: item.none_label(),
            fallback_used: true,
        }
    }
}

fn format_choices(item: &BenchItem) -> String {
    item.choices
        .iter()
        .map(|(label, text)| format!("{label}. {text}"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Map a free-form short answer onto one of the item's choices. Empty
/// answers, unparseable replies and backend failures all land on the
/// "None of the above" option with `fallback_used` set.
pub fn map_answer(short_answer: &str, item: &BenchItem, gateway: &Gateway) -> Traced<MappedLabel> {
    let mut out = Traced::new(MappedLabel::fallback(item));
    if short_answer.trim().is_empty() {
        return out;
    }
    let choices = format_choices(item);
    let rendered = match prompts::render(
        prompts::MAP_CHOICE,
        &[
            ("QUESTION", &item.question),
            ("ANSWER", short_answer.trim()),
            ("CHOICES", &choices),
        ],
    ) {
        Ok(text) => text,
        Err(err) => {
            out.warn(format!("mapping prompt failed to render: {err}"));
            return out;
        }
    };
    let request = gateway.request(prompts::MAP_CHOICE, rendered);
    match gateway.complete(&request) {
        Ok(response) => {
            out.calls.push(CallInfo::new(&request, Some(&response)));
            match parse_choice(&response.text) {
                Some(ChoiceReply::Label(label)) => {
                    out.value = MappedLabel {
                        label,
                        fallback_used: false,
                    }
                }
                Some(ChoiceReply::NoneFits) => {}
                None => out.warn(format!(
                    "item {}: unreadable mapping reply {:?}; using fallback",
                    item.item_id, response.text
                )),
            }
        }
        Err(err) => {
            out.calls.push(CallInfo::new(&request, None));
            out.warn(format!(
                "item {}: mapping failed: {err}; using fallback",
                item.item_id
            ));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChoiceReply {
    Label(Label),
    NoneFits,
}

fn choice_phrase() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\b(?:answer|choice|option)\s*(?:is)?\s*[:\-]?\s*\(?\*{0,2}([A-F])\b")
            .expect("valid regex")
    })
}

/// Read a mapping reply: a line holding only a letter (or NONE) wins,
/// scanning from the last line; otherwise an "answer: X" phrase.
pub fn parse_choice(reply: &str) -> Option<ChoiceReply> {
    for line in reply.lines().rev() {
        let token = line
            .trim()
            .trim_matches(|c: char| !c.is_ascii_alphanumeric());
        if token.eq_ignore_ascii_case("none") {
            return Some(ChoiceReply::NoneFits);
        }
        if let Ok(label) = token.parse::<Label>() {
            return Some(ChoiceReply::Label(label));
        }
    }
    let caps = choice_phrase().captures(reply)?;
    caps[1]
        .to_ascii_uppercase()
        .parse()
        .ok()
        .map(ChoiceReply::Label)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainCount {
    pub correct: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub per_domain_accuracy: BTreeMap<Domain, f64>,
    pub macro_accuracy: f64,
    pub counts: BTreeMap<Domain, DomainCount>,
    pub fallback_rate: f64,
}

impl ScoreReport {
    /// Report from already-computed per-domain accuracies (no counts).
    pub fn from_accuracies(per_domain_accuracy: BTreeMap<Domain, f64>) -> Self {
        Self {
            macro_accuracy: macro_accuracy(per_domain_accuracy.values().copied()),
            per_domain_accuracy,
            counts: BTreeMap::new(),
            fallback_rate: 0.0,
        }
    }
}

/// Unweighted mean; 0 for an empty input.
pub fn macro_accuracy(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(sum, n), v| (sum + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Score mapped labels against gold. Every item needs exactly one result.
pub fn score(
    results: &[(String, MappedLabel)],
    items: &[BenchItem],
) -> Result<ScoreReport, BenchError> {
    if items.is_empty() {
        return Err(BenchError::Empty);
    }
    let by_id: BTreeMap<&str, &BenchItem> = items.iter().map(|i| (i.item_id.as_str(), i)).collect();
    let mut seen = HashSet::new();
    let mut counts: BTreeMap<Domain, DomainCount> = BTreeMap::new();
    let mut fallbacks = 0;
    for (id, mapped) in results {
        let item = by_id
            .get(id.as_str())
            .ok_or_else(|| BenchError::UnknownItem(id.clone()))?;
        if !seen.insert(id.as_str()) {
            return Err(BenchError::DuplicateResult(id.clone()));
        }
        let count = counts.entry(item.domain).or_insert(DomainCount {
            correct: 0,
            total: 0,
        });
        count.total += 1;
        count.correct += usize::from(mapped.label == item.gold);
        fallbacks += usize::from(mapped.fallback_used);
    }
    if let Some(missing) = items.iter().find(|i| !seen.contains(i.item_id.as_str())) {
        return Err(BenchError::MissingResult(missing.item_id.clone()));
    }
    let per_domain_accuracy: BTreeMap<Domain, f64> = counts
        .iter()
        .map(|(&d, c)| (d, c.correct as f64 / c.total as f64))
        .collect();
    Ok(ScoreReport {
        macro_accuracy: macro_accuracy(per_domain_accuracy.values().copied()),
        per_domain_accuracy,
        counts,
        fallback_rate: fallbacks as f64 / results.len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Agreement {
    pub agree: usize,
    pub total: usize,
}

impl Agreement {
    pub fn ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.agree as f64 / self.total as f64
        }
    }
}

/// Count items on which two labelings agree about correctness (both right
/// or both wrong). Items missing from either labeling are an error.
pub fn correctness_agreement(
    items: &[BenchItem],
    first: &BTreeMap<String, Label>,
    second: &BTreeMap<String, Label>,
) -> Result<Agreement, BenchError> {
    let mut agree = 0;
    for item in items {
        let a = first
            .get(&item.item_id)
            .ok_or_else(|| BenchError::MissingResult(item.item_id.clone()))?;
        let b = second
            .get(&item.item_id)
            .ok_or_else(|| BenchError::MissingResult(item.item_id.clone()))?;
        agree += usize::from((*a == item.gold) == (*b == item.gold));
    }
    Ok(Agreement {
        agree,
        total: items.len(),
    })
}
