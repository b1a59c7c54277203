//! Prompt assets and placeholder rendering.
//!
//! Templates use `{NAME}` placeholders (upper-case ASCII and underscores).
//! Substitution is a single pass, so braces inside substituted values are
//! never re-expanded.

use thiserror::Error;

pub const HIERARCHY: &str = "hierarchy";
pub const RANK: &str = "rank";
pub const GET_DETAIL: &str = "get-detail";
pub const SYNTHESIZE: &str = "synthesize";
pub const RAG_ANSWER: &str = "rag-answer";
pub const MAP_CHOICE: &str = "map-choice";

const ASSETS: &[(&str, &str)] = &[
    (HIERARCHY, include_str!("../prompts/hierarchy.txt")),
    (RANK, include_str!("../prompts/rank.txt")),
    (
        "loop-instructions-1",
        include_str!("../prompts/loop-instructions-1.txt"),
    ),
    (
        "loop-instructions-2",
        include_str!("../prompts/loop-instructions-2.txt"),
    ),
    (
        "loop-instructions-3",
        include_str!("../prompts/loop-instructions-3.txt"),
    ),
    (GET_DETAIL, include_str!("../prompts/get-detail.txt")),
    (
        "sufficiency-1",
        include_str!("../prompts/sufficiency-1.txt"),
    ),
    (
        "sufficiency-2",
        include_str!("../prompts/sufficiency-2.txt"),
    ),
    (
        "sufficiency-3",
        include_str!("../prompts/sufficiency-3.txt"),
    ),
    (SYNTHESIZE, include_str!("../prompts/synthesize.txt")),
    (RAG_ANSWER, include_str!("../prompts/rag-answer.txt")),
    (MAP_CHOICE, include_str!("../prompts/map-choice.txt")),
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("unknown prompt asset `{0}`")]
    UnknownAsset(String),
    #[error("prompt `{asset}` needs a value for {{{placeholder}}}")]
    MissingValue { asset: String, placeholder: String },
}

pub fn asset_ids() -> impl Iterator<Item = &'static str> {
    ASSETS.iter().map(|(id, _)| *id)
}

pub fn template(id: &str) -> Result<&'static str, PromptError> {
    ASSETS
        .iter()
        .find(|(asset, _)| *asset == id)
        .map(|(_, text)| *text)
        .ok_or_else(|| PromptError::UnknownAsset(id.to_string()))
}

/// Placeholder names appearing in a template, in order of first use.
pub fn placeholders(template: &str) -> Vec<&str> {
    let mut names = Vec::new();
    for (_, name, _) in scan(template) {
        if let Some(name) = name {
            if !names.contains(&name) {
                names.push(name);
            }
        }
    }
    names
}

/// Render asset `id`, requiring a value for every placeholder it contains.
pub fn render(id: &str, values: &[(&str, &str)]) -> Result<String, PromptError> {
    let text = template(id)?;
    for name in placeholders(text) {
        if !values.iter().any(|(key, _)| *key == name) {
            return Err(PromptError::MissingValue {
                asset: id.to_string(),
                placeholder: name.to_string(),
            });
        }
    }
    let mut out = String::with_capacity(text.len());
    for (literal, name, raw) in scan(text) {
        out.push_str(literal);
        if let Some(name) = name {
            match values.iter().find(|(key, _)| *key == name) {
                Some((_, value)) => out.push_str(value),
                None => out.push_str(raw),
            }
        }
    }
    Ok(out)
}

/// Split a template into (literal, placeholder name, raw placeholder text).
fn scan(template: &str) -> Vec<(&str, Option<&str>, &str)> {
    let mut parts = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after.find('}');
        let name = close
            .map(|c| &after[..c])
            .filter(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_uppercase() || b == b'_'));
        match (name, close) {
            (Some(name), Some(close)) => {
                let raw = &rest[open..open + close + 2];
                parts.push((&rest[..open], Some(name), raw));
                rest = &after[close + 1..];
            }
            _ => {
                parts.push((&rest[..open + 1], None, ""));
                rest = after;
            }
        }
    }
    parts.push((rest, None, ""));
    parts
}
