//! Section hierarchy recovery and pruning.
//!
//! Converted papers often flatten every heading to one Markdown level. A
//! model is asked for the root-to-node path of every heading; the resulting
//! tree is then pruned: a parent with no text of its own before its first
//! subsection disappears as a standalone entry and its heading is prefixed
//! onto each child's label instead ("parent - child").

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document::Document;
use crate::gateway::Gateway;
use crate::prompts;
use crate::trace::{CallInfo, Traced};

/// Separator between path components in composite labels.
pub const LABEL_SEPARATOR: &str = " - ";
/// Separator the hierarchy prompt asks the model to use.
pub const PATH_SEPARATOR: &str = " > ";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HierarchyError {
    #[error(
        "heading {child} cannot have parent {parent}: subtrees must cover contiguous headings"
    )]
    BadNesting { child: usize, parent: usize },
    #[error("tree references heading {index} but the document has {len}")]
    TreeMismatch { index: usize, len: usize },
    #[error("no line of the reply matched a known heading")]
    NoPaths,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub node_id: usize,
    pub heading_index: usize,
    pub children: Vec<usize>,
}

/// Heading tree. Node `i` always carries heading `i`, and a pre-order walk
/// visits headings in document order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionTree {
    pub nodes: Vec<TreeNode>,
    pub roots: Vec<usize>,
}

impl SectionTree {
    /// Every heading a root.
    pub fn flat(len: usize) -> Self {
        Self::from_parents(&vec![None; len]).expect("flat trees are always valid")
    }

    /// Build from a parent table indexed by heading. A heading's parent must
    /// be the heading just before it or one of that heading's ancestors.
    pub fn from_parents(parents: &[Option<usize>]) -> Result<Self, HierarchyError> {
        let mut nodes: Vec<TreeNode> = (0..parents.len())
            .map(|i| TreeNode {
                node_id: i,
                heading_index: i,
                children: Vec::new(),
            })
            .collect();
        let mut roots = Vec::new();
        // ancestor chain of the previous heading, innermost last
        let mut chain: Vec<usize> = Vec::new();
        for (child, parent) in parents.iter().enumerate() {
            match *parent {
                None => {
                    chain.clear();
                    roots.push(child);
                }
                Some(parent) => {
                    let depth = chain
                        .iter()
                        .position(|&a| a == parent)
                        .ok_or(HierarchyError::BadNesting { child, parent })?;
                    chain.truncate(depth + 1);
                    nodes[parent].children.push(child);
                }
            }
            chain.push(child);
        }
        Ok(Self { nodes, roots })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn parents(&self) -> Vec<Option<usize>> {
        let mut parents = vec![None; self.nodes.len()];
        for node in &self.nodes {
            for &child in &node.children {
                parents[child] = Some(node.node_id);
            }
        }
        parents
    }

    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack: Vec<usize> = self.roots.iter().rev().copied().collect();
        while let Some(id) = stack.pop() {
            out.push(self.nodes[id].heading_index);
            stack.extend(self.nodes[id].children.iter().rev());
        }
        out
    }

    /// Root-to-node heading paths, one per node, in document order.
    pub fn paths(&self) -> Vec<Vec<usize>> {
        let parents = self.parents();
        (0..self.nodes.len())
            .map(|mut i| {
                let mut path = vec![i];
                while let Some(p) = parents[i] {
                    path.push(p);
                    i = p;
                }
                path.reverse();
                path
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadingEntry {
    pub label: String,
    pub heading_index: usize,
    /// Byte range of the section body in the source Markdown.
    pub body_ref: (usize, usize),
    pub body: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilteredHeadings {
    pub entries: Vec<HeadingEntry>,
}

impl FilteredHeadings {
    pub fn n(&self) -> usize {
        self.entries.len()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.label.as_str()).collect()
    }
}

/// Ask the model for the heading tree. An unparseable reply gets one retry
/// with a corrective note; a second failure (or a backend error) falls back
/// to a flat tree.
pub fn infer_tree(headings: &[String], title: &str, gateway: &Gateway) -> Traced<SectionTree> {
    if headings.len() <= 1 {
        return Traced::new(SectionTree::flat(headings.len()));
    }
    let listing = headings.join("\n");
    let base = match prompts::render(
        prompts::HIERARCHY,
        &[("TITLE", title), ("HEADINGS", &listing)],
    ) {
        Ok(text) => text,
        Err(err) => {
            let mut out = Traced::new(SectionTree::flat(headings.len()));
            out.warn(format!("hierarchy prompt failed to render: {err}"));
            return out;
        }
    };
    let mut out = Traced::new(SectionTree::flat(headings.len()));
    for attempt in 0..2 {
        let rendered = if attempt == 0 {
            base.clone()
        } else {
            format!(
                "{base}\n\nYour previous reply could not be matched to the headings. \
                 Copy every heading exactly and use \" > \" between path components."
            )
        };
        let request = gateway.request(prompts::HIERARCHY, rendered);
        match gateway.complete(&request) {
            Ok(response) => {
                out.calls.push(CallInfo::new(&request, Some(&response)));
                match parse_paths(&response.text, headings)
                    .and_then(|p| SectionTree::from_parents(&p))
                {
                    Ok(tree) => {
                        out.value = tree;
                        return out;
                    }
                    Err(err) => out.warn(format!(
                        "hierarchy reply unusable (attempt {}): {err}",
                        attempt + 1
                    )),
                }
            }
            Err(err) => {
                out.calls.push(CallInfo::new(&request, None));
                out.warn(format!("hierarchy call failed: {err}; using flat tree"));
                return out;
            }
        }
    }
    out.warn("falling back to a flat heading tree");
    out
}

/// Turn a path-per-line reply into a parent table over `headings`.
///
/// Components are separated by `" > "`; lines without it are split on
/// `" - "` wherever the pieces reassemble into known headings. Lines that
/// match nothing are ignored. Headings never mentioned become roots.
pub fn parse_paths(reply: &str, headings: &[String]) -> Result<Vec<Option<usize>>, HierarchyError> {
    let mut parents: Vec<Option<usize>> = vec![None; headings.len()];
    let mut placed = vec![false; headings.len()];
    let mut matched_any = false;
    for line in reply.lines() {
        let Some(path) = parse_line(line, headings) else {
            continue;
        };
        let leaf_text = path.last().expect("paths are non-empty");
        let Some(leaf) = (0..headings.len()).find(|&i| !placed[i] && headings[i] == *leaf_text)
        else {
            continue;
        };
        matched_any = true;
        placed[leaf] = true;
        parents[leaf] = None;
        // each ancestor is the nearest preceding heading with that text; only
        // the leaf's own parent is authoritative, deeper links fill gaps for
        // headings that have no line of their own
        let mut child = leaf;
        for text in path.iter().rev().skip(1) {
            let Some(ancestor) = (0..child).rev().find(|&i| headings[i] == *text) else {
                break;
            };
            if child == leaf || !placed[child] {
                parents[child] = Some(ancestor);
            }
            child = ancestor;
        }
    }
    if matched_any {
        Ok(parents)
    } else {
        Err(HierarchyError::NoPaths)
    }
}

fn parse_line<'h>(line: &str, headings: &'h [String]) -> Option<Vec<&'h str>> {
    let mut text = line.trim().trim_matches('`').trim();
    for bullet in ["- ", "* ", "\u{2022} "] {
        if let Some(rest) = text.strip_prefix(bullet) {
            if !headings.iter().any(|h| h == text) {
                text = rest.trim();
            }
        }
    }
    if text.is_empty() {
        return None;
    }
    let lookup = |s: &str| {
        headings
            .iter()
            .find(|h| h.as_str() == s)
            .map(String::as_str)
    };
    if text.contains(PATH_SEPARATOR) {
        return text
            .split(PATH_SEPARATOR)
            .map(|c| lookup(c.trim()))
            .collect();
    }
    let pieces: Vec<&str> = text.split(LABEL_SEPARATOR).collect();
    segment(&pieces, 0, &lookup)
}

/// Split `pieces[start..]` into runs that each rejoin to a known heading,
/// preferring the longest run first.
fn segment<'h>(
    pieces: &[&str],
    start: usize,
    lookup: &dyn Fn(&str) -> Option<&'h str>,
) -> Option<Vec<&'h str>> {
    if start == pieces.len() {
        return Some(Vec::new());
    }
    for end in (start + 1..=pieces.len()).rev() {
        let joined = pieces[start..end].join(LABEL_SEPARATOR);
        if let Some(heading) = lookup(joined.trim()) {
            if let Some(mut rest) = segment(pieces, end, lookup) {
                rest.insert(0, heading);
                return Some(rest);
            }
        }
    }
    None
}

/// Drop contentless parents and compose labels.
///
/// A node whose own body is whitespace-only and that has children is not
/// emitted; its label becomes a prefix for its children. Every other node is
/// emitted, labelled with the prefixes of the pruned ancestors directly above
/// it. Output follows document order.
pub fn prune_and_label(
    tree: &SectionTree,
    doc: &Document,
) -> Result<FilteredHeadings, HierarchyError> {
    if let Some(bad) = tree
        .nodes
        .iter()
        .find(|n| n.heading_index >= doc.sections.len())
    {
        return Err(HierarchyError::TreeMismatch {
            index: bad.heading_index,
            len: doc.sections.len(),
        });
    }
    let mut entries = Vec::new();
    for &root in &tree.roots {
        visit(tree, doc, root, None, &mut entries);
    }
    Ok(FilteredHeadings { entries })
}

fn visit(
    tree: &SectionTree,
    doc: &Document,
    node: usize,
    prefix: Option<&str>,
    entries: &mut Vec<HeadingEntry>,
) {
    let node = &tree.nodes[node];
    let section = &doc.sections[node.heading_index];
    let label = match prefix {
        Some(prefix) => format!("{prefix}{LABEL_SEPARATOR}{}", section.heading_text),
        None => section.heading_text.clone(),
    };
    let contentless = section.body.trim().is_empty();
    if contentless && !node.children.is_empty() {
        for &child in &node.children {
            visit(tree, doc, child, Some(&label), entries);
        }
        return;
    }
    entries.push(HeadingEntry {
        label,
        heading_index: node.heading_index,
        body_ref: section.span,
        body: section.body.clone(),
    });
    for &child in &node.children {
        visit(tree, doc, child, None, entries);
    }
}
