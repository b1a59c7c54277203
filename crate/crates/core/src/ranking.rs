//! Reasoning-based section ranking and reordering.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::Gateway;
use crate::hierarchy::FilteredHeadings;
use crate::prompts;
use crate::trace::{CallInfo, Traced};

/// Fraction of a label that a fuzzy match must share as a common prefix.
pub const FUZZY_PREFIX_RATIO: f64 = 0.8;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RankingError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("ranking has {ranking} entries but there are {headings} sections")]
    LengthMismatch { ranking: usize, headings: usize },
    #[error("ranking is not a permutation of 1..={0}")]
    NotPermutation(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub question: String,
    #[serde(default)]
    pub domain_tag: Option<String>,
    #[serde(default)]
    pub category: Option<String>,
}

impl Query {
    pub fn new(question: impl Into<String>) -> Result<Self, RankingError> {
        let question = question.into();
        if question.trim().is_empty() {
            return Err(RankingError::EmptyQuestion);
        }
        Ok(Self {
            question,
            domain_tag: None,
            category: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedList {
    /// 1-based section indices, most promising first.
    pub order: Vec<usize>,
    pub rationale: Option<String>,
    /// True when the model could not be used and document order was kept.
    pub fallback: bool,
}

impl RankedList {
    pub fn identity(n: usize) -> Self {
        Self {
            order: (1..=n).collect(),
            rationale: None,
            fallback: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReorderedSections {
    /// (label, body) pairs in reading order.
    pub items: Vec<(String, String)>,
}

impl ReorderedSections {
    pub fn n(&self) -> usize {
        self.items.len()
    }
}

/// Ask the model to rank the filtered headings for `query`. The reply is
/// parsed leniently and repaired into a full permutation; a failed call keeps
/// document order.
pub fn rank_sections(
    headings: &FilteredHeadings,
    query: &Query,
    title: &str,
    gateway: &Gateway,
) -> Traced<RankedList> {
    let n = headings.n();
    let mut out = Traced::new(RankedList::identity(n));
    if n <= 1 {
        return out;
    }
    let listing = headings
        .entries
        .iter()
        .map(|e| format!("- {}", e.label))
        .collect::<Vec<_>>()
        .join("\n");
    let rendered = match prompts::render(
        prompts::RANK,
        &[
            ("TITLE", title),
            ("QUESTION", &query.question),
            ("HEADINGS", &listing),
        ],
    ) {
        Ok(text) => text,
        Err(err) => {
            out.value.fallback = true;
            out.warn(format!("rank prompt failed to render: {err}"));
            return out;
        }
    };
    let request = gateway.request(prompts::RANK, rendered);
    match gateway.complete(&request) {
        Ok(response) => {
            out.calls.push(CallInfo::new(&request, Some(&response)));
            let labels = headings.labels();
            let raw = parse_ranking(&response.text, &labels);
            if raw.is_empty() {
                out.warn("ranking reply matched no section; keeping document order");
            }
            out.value = RankedList {
                order: repair_ranking(&raw, n),
                rationale: Some(response.text),
                fallback: raw.is_empty(),
            };
        }
        Err(err) => {
            out.calls.push(CallInfo::new(&request, None));
            out.value.fallback = true;
            out.warn(format!(
                "ranking call failed: {err}; keeping document order"
            ));
        }
    }
    out
}

fn numbered_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:[-*]\s+)?(?:\*\*)?(\d+)[.)]\s+(.*)$").expect("valid regex"))
}

/// Map each numbered line of a ranking reply to a 1-based section index.
///
/// The text after the rank number is matched against labels: first as an
/// exact label (or a label followed by a non-alphanumeric boundary), longest
/// label wins; then by a common prefix covering at least 80% of a label.
/// Among equally good candidates the earliest not-yet-used entry wins. A bare
/// integer is taken as an index. Unmatched lines are skipped.
pub fn parse_ranking(reply: &str, labels: &[&str]) -> Vec<i64> {
    let mut used = vec![false; labels.len()];
    let mut raw = Vec::new();
    for line in reply.lines() {
        let line = line.trim();
        let Some(caps) = numbered_line().captures(line) else {
            continue;
        };
        let rest = clean(&caps[2]);
        let found = match_label(rest, labels, &used)
            .or_else(|| match_label(clean(line), labels, &used))
            .map(|i| i as i64 + 1)
            .or_else(|| rest.parse::<i64>().ok());
        if let Some(index) = found {
            if index >= 1 && (index as usize) <= labels.len() {
                used[index as usize - 1] = true;
            }
            raw.push(index);
        }
    }
    raw
}

fn clean(text: &str) -> &str {
    text.trim()
        .trim_start_matches("**")
        .trim_start_matches(['"', '\u{201c}', '`'])
        .trim()
}

fn match_label(text: &str, labels: &[&str], used: &[bool]) -> Option<usize> {
    let exact = labels.iter().enumerate().filter(|(_, label)| {
        !label.is_empty()
            && text.starts_with(**label)
            && text[label.len()..]
                .chars()
                .next()
                .is_none_or(|c| !c.is_alphanumeric())
    });
    if let Some(i) = best(exact.map(|(i, l)| (i, l.len())), used) {
        return Some(i);
    }
    let fuzzy = labels.iter().enumerate().filter_map(|(i, label)| {
        let label_len = label.chars().count();
        let common = text
            .chars()
            .zip(label.chars())
            .take_while(|(a, b)| a == b)
            .count();
        (label_len > 0 && common as f64 >= FUZZY_PREFIX_RATIO * label_len as f64)
            .then_some((i, common))
    });
    best(fuzzy, used)
}

/// Highest score wins; ties and reuse go to the earliest unused entry.
fn best(candidates: impl Iterator<Item = (usize, usize)>, used: &[bool]) -> Option<usize> {
    let candidates: Vec<(usize, usize)> = candidates.collect();
    let top = candidates.iter().map(|&(_, score)| score).max()?;
    let tied = candidates.iter().filter(|&&(_, score)| score == top);
    tied.clone()
        .find(|&&(i, _)| !used[i])
        .or_else(|| tied.clone().next())
        .map(|&(i, _)| i)
}

/// Make any list of integers a permutation of `1..=n`: out-of-range values
/// are dropped, repeats keep their first occurrence, and missing indices are
/// appended in ascending order.
pub fn repair_ranking(raw: &[i64], n: usize) -> Vec<usize> {
    let mut seen = vec![false; n + 1];
    let mut order = Vec::with_capacity(n);
    for &value in raw {
        if value >= 1 && value <= n as i64 && !seen[value as usize] {
            seen[value as usize] = true;
            order.push(value as usize);
        }
    }
    order.extend((1..=n).filter(|&i| !seen[i]));
    order
}

pub fn reorder(
    headings: &FilteredHeadings,
    ranking: &RankedList,
) -> Result<ReorderedSections, RankingError> {
    let n = headings.n();
    if ranking.order.len() != n {
        return Err(RankingError::LengthMismatch {
            ranking: ranking.order.len(),
            headings: n,
        });
    }
    let mut seen = vec![false; n];
    for &k in &ranking.order {
        if k == 0 || k > n || std::mem::replace(&mut seen[k - 1], true) {
            return Err(RankingError::NotPermutation(n));
        }
    }
    Ok(ReorderedSections {
        items: ranking
            .order
            .iter()
            .map(|&k| {
                let entry = &headings.entries[k - 1];
                (entry.label.clone(), entry.body.clone())
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{GatewayError, RetryPolicy, ScriptedBackend};
    use crate::hierarchy::HeadingEntry;

    fn headings(labels: &[&str]) -> FilteredHeadings {
        FilteredHeadings {
            entries: labels
                .iter()
                .enumerate()
                .map(|(i, label)| HeadingEntry {
                    label: label.to_string(),
                    heading_index: i,
                    body_ref: (0, 0),
                    body: format!("body of {label}"),
                })
                .collect(),
        }
    }

    #[test]
    fn repair_examples() {
        assert_eq!(repair_ranking(&[3, 1, 3], 4), [3, 1, 2, 4]);
        assert_eq!(repair_ranking(&[], 3), [1, 2, 3]);
        assert_eq!(repair_ranking(&[-1, 0, 9, 2], 3), [2, 1, 3]);
    }

    #[test]
    fn reorder_applies_order() {
        let h = headings(&["A", "B", "C"]);
        let ranked = RankedList {
            order: vec![2, 3, 1],
            rationale: None,
            fallback: false,
        };
        let labels: Vec<_> = reorder(&h, &ranked)
            .unwrap()
            .items
            .into_iter()
            .map(|(l, _)| l)
            .collect();
        assert_eq!(labels, ["B", "C", "A"]);
        let same = reorder(&h, &RankedList::identity(3)).unwrap();
        assert_eq!(same.items[0], ("A".to_string(), "body of A".to_string()));
    }

    #[test]
    fn reorder_rejects_bad_rankings() {
        let h = headings(&["A", "B"]);
        let short = RankedList::identity(1);
        assert_eq!(
            reorder(&h, &short),
            Err(RankingError::LengthMismatch {
                ranking: 1,
                headings: 2
            })
        );
        let dup = RankedList {
            order: vec![1, 1],
            rationale: None,
            fallback: false,
        };
        assert_eq!(reorder(&h, &dup), Err(RankingError::NotPermutation(2)));
    }

    #[test]
    fn parses_numbered_rationale_lines() {
        let labels = [
            "qwzx Opening remarks etc",
            "2. plvrt Stuff we used and did - 2.1. mnbq Growing the microbes and so on",
            "2. plvrt Stuff we used and did - 2.3. hjkty SERS shiny laser business",
        ];
        let reply = "1. 2. plvrt Stuff we used and did - 2.3. hjkty SERS shiny laser business \u{2014} \
                     Heading names the SERS setup directly.\n\n\
                     2. 2. plvrt Stuff we used and did - 2.1. mnbq Growing the microbes and so on \u{2014} \
                     Part of the materials section.\n\
                     3. qwzx Opening remarks etc \u{2014} Often summarizes methods.";
        assert_eq!(parse_ranking(reply, &labels), [3, 2, 1]);
    }

    #[test]
    fn fuzzy_prefix_match_needs_eighty_percent() {
        let labels = ["Experimental setup and SERS measurement"];
        // 33 of 39 characters shared
        assert_eq!(
            parse_ranking("1. Experimental setup and SERS measu", &labels),
            [1]
        );
        assert!(parse_ranking("1. Experimental setup", &labels).is_empty());
    }

    #[test]
    fn duplicate_labels_map_to_successive_entries() {
        let labels = ["Methods", "Results", "Methods"];
        assert_eq!(
            parse_ranking("1. Methods\n2. Methods\n3. Results", &labels),
            [1, 3, 2]
        );
    }

    #[test]
    fn bare_indices_are_accepted() {
        assert_eq!(parse_ranking("1. 2\n2. 1", &["A", "B"]), [2, 1]);
    }

    #[test]
    fn singleton_needs_no_model() {
        let gateway = Gateway::new(ScriptedBackend::fixed("x"), "m");
        let q = Query::new("q").unwrap();
        let out = rank_sections(&headings(&["Only"]), &q, "T", &gateway);
        assert_eq!(out.value.order, [1]);
        assert!(out.calls.is_empty());
    }

    #[test]
    fn backend_failure_keeps_document_order() {
        let gateway = Gateway::new(
            ScriptedBackend::new(|_| Err(GatewayError::Transport("down".into()))),
            "m",
        )
        .with_retry(RetryPolicy::immediate());
        let q = Query::new("q").unwrap();
        let out = rank_sections(&headings(&["A", "B", "C"]), &q, "T", &gateway);
        assert_eq!(out.value.order, [1, 2, 3]);
        assert!(out.value.fallback);
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn empty_question_is_rejected() {
        assert_eq!(Query::new("  "), Err(RankingError::EmptyQuestion));
    }
}
