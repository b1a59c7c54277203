//! Sentence segmentation tuned for scientific prose.
//!
//! A boundary falls after `.`, `?` or `!` (plus any closing quotes or
//! brackets) when whitespace follows and the next word starts with an
//! upper-case letter or a digit. Blank lines always end a sentence. Periods
//! that close a known abbreviation or a single-letter initial never split.

use std::ops::Range;

const ABBREVIATIONS: &[&str] = &[
    "Fig", "Figs", "Eq", "Eqs", "Ref", "Refs", "Tab", "Sec", "Sect", "Ch", "No", "Nos", "Vol",
    "vol", "pp", "al", "e.g", "i.e", "cf", "vs", "approx", "ca", "Dr", "Prof", "Mr", "Ms", "Mrs",
    "St", "resp", "Inc", "Ltd", "Jr", "Sr",
];

const CLOSERS: &[char] = &[')', ']', '"', '\'', '\u{201d}', '\u{2019}'];
const OPENERS: &[char] = &['(', '[', '"', '\'', '\u{201c}', '\u{2018}'];

/// Byte ranges of the sentences in `body`, trimmed of surrounding whitespace.
pub fn split_sentences(body: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for block in split_blocks(body) {
        let start = offset_of(body, block);
        split_block(block, start, &mut out);
        offset = start + block.len();
    }
    debug_assert!(offset <= body.len());
    out
}

fn offset_of(outer: &str, inner: &str) -> usize {
    inner.as_ptr() as usize - outer.as_ptr() as usize
}

/// Paragraph blocks separated by whitespace-only lines.
fn split_blocks(body: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut block_start: Option<usize> = None;
    let mut offset = 0;
    for line in body.split_inclusive('\n') {
        let blank = line.trim().is_empty();
        match (blank, block_start) {
            (true, Some(start)) => {
                blocks.push(&body[start..offset]);
                block_start = None;
            }
            (false, None) => block_start = Some(offset),
            _ => {}
        }
        offset += line.len();
    }
    if let Some(start) = block_start {
        blocks.push(&body[start..]);
    }
    blocks
}

fn split_block(block: &str, base: usize, out: &mut Vec<Range<usize>>) {
    let chars: Vec<(usize, char)> = block.char_indices().collect();
    let mut sentence_start = 0;
    let mut i = 0;
    while i < chars.len() {
        let (pos, ch) = chars[i];
        if matches!(ch, '.' | '?' | '!') {
            let mut j = i + 1;
            while j < chars.len()
                && (CLOSERS.contains(&chars[j].1) || matches!(chars[j].1, '.' | '?' | '!'))
            {
                j += 1;
            }
            let end = chars.get(j).map_or(block.len(), |(p, _)| *p);
            let mut k = j;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            let spaced = k > j;
            while k < chars.len() && OPENERS.contains(&chars[k].1) {
                k += 1;
            }
            let starts_sentence = chars
                .get(k)
                .is_some_and(|(_, c)| c.is_uppercase() || c.is_ascii_digit());
            if spaced && starts_sentence && !(ch == '.' && is_abbreviation(&block[..pos])) {
                push_trimmed(block, base, sentence_start, end, out);
                sentence_start = end;
                i = j;
                continue;
            }
        }
        i += 1;
    }
    push_trimmed(block, base, sentence_start, block.len(), out);
}

/// Whether the word immediately before a period is an abbreviation or initial.
fn is_abbreviation(before: &str) -> bool {
    let word = before
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("")
        .trim_start_matches(OPENERS);
    if ABBREVIATIONS.contains(&word) {
        return true;
    }
    let mut chars = word.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if c.is_uppercase())
}

fn push_trimmed(block: &str, base: usize, start: usize, end: usize, out: &mut Vec<Range<usize>>) {
    let slice = &block[start..end];
    let lead = slice.len() - slice.trim_start().len();
    let trimmed = slice.trim();
    if !trimmed.is_empty() {
        let s = base + start + lead;
        out.push(s..s + trimmed.len());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texts(body: &str) -> Vec<&str> {
        split_sentences(body)
            .into_iter()
            .map(|r| &body[r])
            .collect()
    }

    #[test]
    fn two_plain_sentences() {
        assert_eq!(
            texts("The laser is 785 nm. Spectra were averaged."),
            ["The laser is 785 nm.", "Spectra were averaged."]
        );
    }

    #[test]
    fn figure_abbreviation_does_not_split() {
        assert_eq!(texts("Fig. 2 shows results."), ["Fig. 2 shows results."]);
    }

    #[test]
    fn decimals_stay_intact() {
        assert_eq!(
            texts("Pi is 3.14 here. Next one."),
            ["Pi is 3.14 here.", "Next one."]
        );
    }

    #[test]
    fn empty_and_whitespace_bodies() {
        assert!(split_sentences("").is_empty());
        assert!(split_sentences(" \n\t\n").is_empty());
    }

    #[test]
    fn blank_lines_end_sentences() {
        assert_eq!(
            texts("Table 1: values\n\nwe measured things"),
            ["Table 1: values", "we measured things"]
        );
    }

    #[test]
    fn closing_quote_stays_with_sentence() {
        assert_eq!(
            texts("He said \"stop.\" Then left."),
            ["He said \"stop.\"", "Then left."]
        );
    }
}
