//! Surface-form normalization shared by trie construction and step matching.
//!
//! The normalized string keeps a byte-level map back to the raw input so that
//! a span matched in normalized space can be projected onto the generating
//! model's token boundaries.

use std::ops::Range;

use serde::{Deserialize, Serialize};

/// One normalized character and the raw bytes it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OffsetSpan {
    pub normalized: Range<usize>,
    pub original: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct NormalizedText {
    pub text: String,
    /// Ordered, contiguous, covers `0..text.len()`. Byte offsets on both sides.
    pub offset_map: Vec<OffsetSpan>,
}

/// A whitespace-delimited word of normalized text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word {
    /// Byte range in the normalized text, including any surrounding punctuation.
    pub range: Range<usize>,
    /// Matching key: the word with surrounding punctuation stripped.
    pub key: String,
}

impl NormalizedText {
    /// Maps a byte range of the normalized text back to the raw input.
    ///
    /// Returns `None` for empty ranges and for ranges that fall outside the
    /// normalized text.
    pub fn to_original(&self, range: Range<usize>) -> Option<Range<usize>> {
        if range.start >= range.end || range.end > self.text.len() {
            return None;
        }
        let first = self
            .offset_map
            .partition_point(|s| s.normalized.end <= range.start);
        let last = self
            .offset_map
            .partition_point(|s| s.normalized.start < range.end);
        if first >= last {
            return None;
        }
        Some(self.offset_map[first].original.start..self.offset_map[last - 1].original.end)
    }

    pub fn words(&self) -> Vec<Word> {
        let mut out = Vec::new();
        let mut start = 0;
        for piece in self.text.split(' ') {
            let end = start + piece.len();
            if !piece.is_empty() {
                out.push(Word {
                    range: start..end,
                    key: word_key(piece).to_string(),
                });
            }
            start = end + 1;
        }
        out
    }
}

/// Characters ignored at the edges of a word when matching.
fn is_edge_punct(c: char) -> bool {
    matches!(
        c,
        '.' | ',' | ';' | ':' | '!' | '?' | '"' | '\'' | '(' | ')' | '[' | ']' | '{' | '}' | '<'
            | '>' | '*' | '`'
    )
}

/// Strips surrounding punctuation from a normalized word. Words that are
/// nothing but punctuation keep their full form.
pub fn word_key(word: &str) -> &str {
    let stripped = word.trim_matches(is_edge_punct);
    if stripped.is_empty() {
        word
    } else {
        stripped
    }
}

fn canonical_punct(c: char) -> Option<&'static str> {
    Some(match c {
        '\u{2010}'..='\u{2015}' | '\u{2212}' | '\u{FE58}' | '\u{FE63}' | '\u{FF0D}' => "-",
        '\u{2018}' | '\u{2019}' | '\u{201A}' | '\u{201B}' | '\u{2032}' | '\u{FF07}' => "'",
        '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{201F}' | '\u{2033}' | '\u{00AB}'
        | '\u{00BB}' | '\u{FF02}' => "\"",
        '\u{2026}' => "...",
        '\u{FF0C}' => ",",
        '\u{FF05}' => "%",
        _ => return None,
    })
}

/// Lowercases, collapses whitespace, trims, maps punctuation variants to ASCII
/// and drops digit-flanked thousands separators.
pub fn normalize(raw: &str) -> NormalizedText {
    let mut text = String::with_capacity(raw.len());
    let mut offset_map = Vec::with_capacity(raw.len());
    let mut pending_space: Option<Range<usize>> = None;

    let mut chars = raw.char_indices().peekable();
    while let Some((at, ch)) = chars.next() {
        let original = at..at + ch.len_utf8();
        if ch.is_whitespace() {
            pending_space = Some(match pending_space {
                Some(r) => r.start..original.end,
                None => original,
            });
            continue;
        }

        let mapped: Option<&str> = canonical_punct(ch);
        let is_comma = mapped == Some(",") || ch == ',';
        if is_comma && pending_space.is_none() {
            let prev_digit = text.as_bytes().last().is_some_and(u8::is_ascii_digit);
            let next_digit = chars.peek().is_some_and(|(_, n)| n.is_ascii_digit());
            if prev_digit && next_digit {
                continue;
            }
        }

        if let Some(space) = pending_space.take() {
            if !text.is_empty() {
                offset_map.push(OffsetSpan {
                    normalized: text.len()..text.len() + 1,
                    original: space,
                });
                text.push(' ');
            }
        }

        let mut emit = |c: char| {
            let start = text.len();
            text.push(c);
            offset_map.push(OffsetSpan {
                normalized: start..text.len(),
                original: original.clone(),
            });
        };
        match mapped {
            Some(s) => s.chars().for_each(&mut emit),
            None => ch.to_lowercase().for_each(&mut emit),
        }
    }

    NormalizedText { text, offset_map }
}
