//! Markdown paper model: headings, section bodies and byte spans.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::sentences::split_sentences;

/// Environment variable naming the PDF-to-Markdown converter command.
pub const PDF_CONVERTER_ENV: &str = "LECTERN_PDF_CONVERTER";

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("document `{0}` has no Markdown headings")]
    NoHeadings(String),
    #[error("section index {index} out of range (document has {len} sections)")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not valid UTF-8")]
    NotUtf8 { path: PathBuf },
    #[error("{path} is a PDF but {PDF_CONVERTER_ENV} is not set")]
    ConverterMissing { path: PathBuf },
    #[error("PDF converter failed on {path}: {message}")]
    ConverterFailed { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSection {
    pub heading_text: String,
    pub heading_level: usize,
    pub body: String,
    /// Byte range of `body` inside the raw Markdown.
    pub span: (usize, usize),
    /// Byte range from the start of the heading line to the next heading.
    pub extent: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub raw_markdown: String,
    pub sections: Vec<RawSection>,
}

impl Document {
    /// Text before the first heading.
    pub fn preamble(&self) -> &str {
        let end = self
            .sections
            .first()
            .map_or(self.raw_markdown.len(), |s| s.extent.0);
        &self.raw_markdown[..end]
    }

    pub fn len(&self) -> usize {
        self.sections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }

    pub fn headings(&self) -> Vec<String> {
        self.sections
            .iter()
            .map(|s| s.heading_text.clone())
            .collect()
    }

    /// Preamble followed by every section slice; always equals `raw_markdown`.
    pub fn reconstruct(&self) -> String {
        let mut out = String::from(self.preamble());
        for section in &self.sections {
            out.push_str(&self.raw_markdown[section.extent.0..section.extent.1]);
        }
        out
    }

    pub fn with_title(mut self, title: impl Into<String>) -> Self {
        self.title = title.into();
        self
    }
}

/// Parse Markdown into sections. Any line of one or more `#` followed by a
/// space is a heading whose level is the number of pound signs; lines inside
/// fenced code blocks are never headings. The document title defaults to the
/// first heading.
pub fn parse_markdown(raw: &str, doc_id: &str) -> Result<Document, DocumentError> {
    let headings = heading_lines(raw);
    if headings.is_empty() {
        return Err(DocumentError::NoHeadings(doc_id.to_string()));
    }
    let mut sections = Vec::with_capacity(headings.len());
    for (i, heading) in headings.iter().enumerate() {
        let next = headings.get(i + 1).map_or(raw.len(), |h| h.start);
        let body_start = heading.line_end;
        let mut body_end = next;
        // the line break before the next heading belongs to the slice, not the body
        if raw[body_start..body_end].ends_with("\r\n") {
            body_end -= 2;
        } else if raw[body_start..body_end].ends_with('\n') {
            body_end -= 1;
        }
        sections.push(RawSection {
            heading_text: heading.text.to_string(),
            heading_level: heading.level,
            body: raw[body_start..body_end].to_string(),
            span: (body_start, body_end),
            extent: (heading.start, next),
        });
    }
    Ok(Document {
        doc_id: doc_id.to_string(),
        title: sections[0].heading_text.clone(),
        raw_markdown: raw.to_string(),
        sections,
    })
}

pub fn section_body(document: &Document, index: usize) -> Result<&str, DocumentError> {
    document
        .sections
        .get(index)
        .map(|s| s.body.as_str())
        .ok_or(DocumentError::IndexOutOfRange {
            index,
            len: document.sections.len(),
        })
}

/// Number of heading lines in `raw` under the same rules as [`parse_markdown`].
pub fn count_heading_lines(raw: &str) -> usize {
    heading_lines(raw).len()
}

struct HeadingLine<'a> {
    start: usize,
    line_end: usize,
    level: usize,
    text: &'a str,
}

fn heading_lines(raw: &str) -> Vec<HeadingLine<'_>> {
    let mut out = Vec::new();
    let mut fence: Option<(u8, usize)> = None;
    let mut offset = 0;
    for line in raw.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let content = line.trim_end_matches(['\n', '\r']);
        if let Some(marker) = fence_marker(content) {
            match fence {
                None => fence = Some(marker),
                Some((ch, len)) if marker.0 == ch && marker.1 >= len => fence = None,
                Some(_) => {}
            }
            continue;
        }
        if fence.is_some() {
            continue;
        }
        let level = content.bytes().take_while(|&b| b == b'#').count();
        if level > 0 && content.as_bytes().get(level) == Some(&b' ') {
            out.push(HeadingLine {
                start,
                line_end: offset,
                level,
                text: content[level..].trim(),
            });
        }
    }
    out
}

fn fence_marker(line: &str) -> Option<(u8, usize)> {
    let indent = line.len() - line.trim_start_matches(' ').len();
    if indent > 3 {
        return None;
    }
    let rest = &line[indent..];
    let ch = *rest.as_bytes().first()?;
    if ch != b'`' && ch != b'~' {
        return None;
    }
    let len = rest.bytes().take_while(|&b| b == ch).count();
    (len >= 3).then_some((ch, len))
}

/// Read a paper from disk. PDFs are piped through the converter named in
/// `LECTERN_PDF_CONVERTER`, which receives the PDF path as its last argument
/// and must print Markdown on stdout.
pub fn load_paper(path: &Path) -> Result<Document, DocumentError> {
    let doc_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let is_pdf = path
        .extension()
        .is_some_and(|ext| ext.eq_ignore_ascii_case("pdf"));
    let markdown = if is_pdf {
        let converter = env::var(PDF_CONVERTER_ENV)
            .ok()
            .filter(|c| !c.trim().is_empty())
            .ok_or_else(|| DocumentError::ConverterMissing {
                path: path.to_path_buf(),
            })?;
        convert_pdf(&converter, path)?
    } else {
        let bytes = fs::read(path).map_err(|source| DocumentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        String::from_utf8(bytes).map_err(|_| DocumentError::NotUtf8 {
            path: path.to_path_buf(),
        })?
    };
    parse_markdown(&markdown, &doc_id)
}

fn convert_pdf(converter: &str, path: &Path) -> Result<String, DocumentError> {
    let failed = |message: String| DocumentError::ConverterFailed {
        path: path.to_path_buf(),
        message,
    };
    let mut words = converter.split_whitespace();
    let program = words.next().ok_or_else(|| failed("empty command".into()))?;
    let output = Command::new(program)
        .args(words)
        .arg(path)
        .output()
        .map_err(|e| failed(format!("cannot run `{program}`: {e}")))?;
    if !output.status.success() {
        return Err(failed(format!(
            "{}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    String::from_utf8(output.stdout).map_err(|_| failed("output is not UTF-8".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_flat_sections() {
        let doc = parse_markdown("# A\nx\n# B\ny", "d").unwrap();
        let got: Vec<_> = doc
            .sections
            .iter()
            .map(|s| (s.heading_text.as_str(), s.heading_level, s.body.as_str()))
            .collect();
        assert_eq!(got, [("A", 1, "x"), ("B", 1, "y")]);
        assert_eq!(doc.title, "A");
        assert_eq!(section_body(&doc, 0).unwrap(), "x");
    }

    #[test]
    fn single_pound_numbered_headings_are_all_level_one() {
        let raw = "# Quantification of bacteria\n\n# 1. Introduction\nText.\n\n\
                   # 2. Materials and methods\n# 2.1. mnbq Growing the microbes\nCultured.\n";
        let doc = parse_markdown(raw, "thrift").unwrap();
        assert!(doc.sections.iter().all(|s| s.heading_level == 1));
        assert_eq!(doc.sections[1].heading_text, "1. Introduction");
        assert_eq!(
            doc.sections[3].heading_text,
            "2.1. mnbq Growing the microbes"
        );
        assert_eq!(doc.sections[2].body, "");
    }

    #[test]
    fn multi_level_headings_keep_their_level() {
        let doc = parse_markdown("# T\n## Methods\n### Setup\nbody", "d").unwrap();
        let levels: Vec<_> = doc.sections.iter().map(|s| s.heading_level).collect();
        assert_eq!(levels, [1, 2, 3]);
    }

    #[test]
    fn zero_headings_is_an_error() {
        assert!(matches!(
            parse_markdown("just text\n#hashtag not heading\n", "d"),
            Err(DocumentError::NoHeadings(_))
        ));
    }

    #[test]
    fn body_keeps_internal_blank_lines() {
        let raw = "pre\n# A\n\npara one\n\npara two\n\n# B\n";
        let doc = parse_markdown(raw, "d").unwrap();
        assert_eq!(doc.preamble(), "pre\n");
        assert_eq!(doc.sections[0].body, "\npara one\n\npara two\n");
        assert_eq!(doc.sections[1].body, "");
        assert_eq!(doc.reconstruct(), raw);
    }

    #[test]
    fn headings_inside_code_fences_are_ignored() {
        let raw = "# Code\n```python\n# not a heading\n```\n~~~\n## also not\n~~~\n# Next\n";
        let doc = parse_markdown(raw, "d").unwrap();
        assert_eq!(doc.headings(), ["Code", "Next"]);
        assert!(doc.sections[0].body.contains("# not a heading"));
        assert_eq!(count_heading_lines(raw), 2);
    }

    #[test]
    fn crlf_line_endings() {
        let raw = "# A\r\nx\r\n# B\r\ny\r\n";
        let doc = parse_markdown(raw, "d").unwrap();
        assert_eq!(doc.sections[0].body, "x");
        assert_eq!(doc.sections[1].body, "y");
        assert_eq!(doc.reconstruct(), raw);
    }

    #[test]
    fn out_of_range_index() {
        let doc = parse_markdown("# A\n", "d").unwrap();
        assert!(matches!(
            section_body(&doc, 3),
            Err(DocumentError::IndexOutOfRange { index: 3, len: 1 })
        ));
    }

    #[test]
    fn body_span_points_into_raw() {
        let raw = "intro\n# A\nalpha\n# B\nbeta\n";
        let doc = parse_markdown(raw, "d").unwrap();
        for s in &doc.sections {
            assert_eq!(&raw[s.span.0..s.span.1], s.body);
        }
    }
}
