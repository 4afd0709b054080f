use std::collections::HashMap;
use std::ops::Range;

use serde::Serialize;

use super::mask::{validate_token_ranges, TokenMask};
use super::normalize::{normalize, NormalizedText, Word};
use super::table::Table;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Header,
    Cell,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrieEntry {
    /// Normalized text of the first entry inserted along this path.
    pub text: String,
    pub kind: EntryKind,
}

#[derive(Debug, Default, Clone)]
struct Node {
    children: HashMap<String, usize>,
    entry: Option<TrieEntry>,
}

/// Word-level trie over normalized table headers and cells.
///
/// Edges are keyed by [`Word::key`], so punctuation hugging a word in either
/// the table or the step text does not block a match.
#[derive(Debug, Clone)]
pub struct TableTrie {
    nodes: Vec<Node>,
    entries: usize,
}

/// A matched table span inside a step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SpanMatch {
    /// Word indices into the normalized step.
    pub words: Range<usize>,
    /// Byte range in the normalized step text.
    pub normalized: Range<usize>,
    /// Byte range in the raw step text.
    pub original: Range<usize>,
    pub entry: String,
    pub kind: EntryKind,
}

impl Default for TableTrie {
    fn default() -> Self {
        TableTrie {
            nodes: vec![Node::default()],
            entries: 0,
        }
    }
}

impl TableTrie {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts every header (when `include_headers`) and every non-blank cell.
    pub fn from_table(table: &Table, include_headers: bool) -> Self {
        let mut trie = TableTrie::new();
        if include_headers {
            for h in &table.headers {
                trie.insert(h, EntryKind::Header);
            }
        }
        for cell in table.rows.iter().flatten() {
            trie.insert(cell, EntryKind::Cell);
        }
        trie
    }

    /// Inserts one entry as a complete word path. Returns false when the entry
    /// normalizes to nothing or the path was already present.
    pub fn insert(&mut self, raw: &str, kind: EntryKind) -> bool {
        let norm = normalize(raw);
        let words = norm.words();
        if words.is_empty() {
            return false;
        }
        let mut node = 0;
        for w in &words {
            node = match self.nodes[node].children.get(&w.key) {
                Some(&next) => next,
                None => {
                    self.nodes.push(Node::default());
                    let next = self.nodes.len() - 1;
                    self.nodes[node].children.insert(w.key.clone(), next);
                    next
                }
            };
        }
        if self.nodes[node].entry.is_some() {
            return false;
        }
        self.nodes[node].entry = Some(TrieEntry {
            text: norm.text,
            kind,
        });
        self.entries += 1;
        true
    }

    /// Number of distinct entry paths.
    pub fn len(&self) -> usize {
        self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries == 0
    }

    pub fn contains(&self, raw: &str) -> bool {
        self.lookup(&normalize(raw).words()).is_some()
    }

    fn lookup(&self, words: &[Word]) -> Option<&TrieEntry> {
        let mut node = 0;
        for w in words {
            node = *self.nodes[node].children.get(&w.key)?;
        }
        self.nodes[node].entry.as_ref()
    }

    /// Longest entry starting at word `start`: returns (end word index, entry).
    fn longest_at(&self, words: &[Word], start: usize) -> Option<(usize, &TrieEntry)> {
        let mut node = 0;
        let mut best = None;
        for (i, w) in words.iter().enumerate().skip(start) {
            match self.nodes[node].children.get(&w.key) {
                Some(&next) => node = next,
                None => break,
            }
            if let Some(entry) = &self.nodes[node].entry {
                best = Some((i + 1, entry));
            }
        }
        best
    }

    /// Greedy left-to-right longest-prefix scan over the normalized step.
    pub fn find_matches(&self, step_text: &str) -> Vec<SpanMatch> {
        let norm = normalize(step_text);
        self.find_matches_normalized(&norm)
    }

    pub(crate) fn find_matches_normalized(&self, norm: &NormalizedText) -> Vec<SpanMatch> {
        let words = norm.words();
        let mut out = Vec::new();
        let mut i = 0;
        while i < words.len() {
            match self.longest_at(&words, i) {
                Some((end, entry)) => {
                    let normalized = words[i].range.start..words[end - 1].range.end;
                    let original = norm
                        .to_original(normalized.clone())
                        .expect("word ranges are non-empty and in bounds");
                    out.push(SpanMatch {
                        words: i..end,
                        normalized,
                        original,
                        entry: entry.text.clone(),
                        kind: entry.kind,
                    });
                    i = end;
                }
                None => i += 1,
            }
        }
        out
    }

    /// Marks every token that overlaps a matched table span.
    ///
    /// `token_ranges` are byte ranges that must tile `step_text` in order.
    pub fn match_step(&self, step_text: &str, token_ranges: &[Range<usize>]) -> Result<TokenMask> {
        validate_token_ranges(step_text, token_ranges)?;
        let spans: Vec<Range<usize>> = self
            .find_matches(step_text)
            .into_iter()
            .map(|m| m.original)
            .collect();
        Ok(TokenMask::from_spans(&spans, token_ranges))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tokens_of(text: &str) -> Vec<Range<usize>> {
        // one token per whitespace-separated chunk, trailing space attached
        let mut out = Vec::new();
        let mut start = 0;
        for (i, c) in text.char_indices() {
            if c == ' ' {
                out.push(start..i + 1);
                start = i + 1;
            }
        }
        if start < text.len() {
            out.push(start..text.len());
        }
        out
    }

    #[test]
    fn header_and_cell_paths() {
        let t = Table::new(
            "t",
            vec!["Elevation (m)".into(), "City".into()],
            vec![vec!["4,808".into(), "New York".into()]],
        )
        .unwrap();
        let trie = TableTrie::from_table(&t, true);
        assert!(trie.contains("elevation (m)"));
        assert!(trie.contains("New   York"));
        assert!(trie.contains("4808"));
        assert!(!trie.contains("new"));
        assert_eq!(trie.len(), 4);
    }

    #[test]
    fn blank_cells_skipped() {
        let t = Table::new("t", vec!["A".into()], vec![vec!["  ".into()], vec!["\t".into()]]).unwrap();
        let trie = TableTrie::from_table(&t, true);
        assert_eq!(trie.len(), 1);
        assert!(trie.contains("a"));
    }

    #[test]
    fn duplicates_inserted_once() {
        let mut trie = TableTrie::new();
        assert!(trie.insert("New York", EntryKind::Cell));
        assert!(!trie.insert("new  york", EntryKind::Header));
        assert_eq!(trie.len(), 1);
    }

    #[test]
    fn prefers_longest_match() {
        let mut trie = TableTrie::new();
        trie.insert("new", EntryKind::Cell);
        trie.insert("new york", EntryKind::Cell);
        let step = "founded in new york in 1898";
        let toks = tokens_of(step);
        let mask = trie.match_step(step, &toks).unwrap();
        assert_eq!(mask.bits(), [false, false, true, true, false, false]);
        let m = trie.find_matches(step);
        assert_eq!(m.len(), 1);
        assert_eq!(&step[m[0].original.clone()], "new york");
    }

    #[test]
    fn falls_back_to_shorter_entry() {
        let mut trie = TableTrie::new();
        trie.insert("new", EntryKind::Cell);
        trie.insert("new york city", EntryKind::Cell);
        let m = trie.find_matches("new york state");
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].entry, "new");
    }

    #[test]
    fn no_shared_vocabulary() {
        let mut trie = TableTrie::new();
        trie.insert("oslo", EntryKind::Cell);
        let step = "the answer is seven";
        let mask = trie.match_step(step, &tokens_of(step)).unwrap();
        assert!(mask.bits().iter().all(|b| !b));
    }

    #[test]
    fn only_whole_words_match() {
        let mut trie = TableTrie::new();
        trie.insert("art", EntryKind::Cell);
        assert!(trie.find_matches("a smart move").is_empty());
        assert_eq!(trie.find_matches("modern art.").len(), 1);
    }

    #[test]
    fn partial_token_overlap_counts() {
        let mut trie = TableTrie::new();
        trie.insert("york", EntryKind::Cell);
        let step = "newyork york";
        // token "ork yo" straddles: [0..4) "newy", [4..9) "ork y", [9..12) "ork"
        let toks = vec![0..4, 4..9, 9..12];
        let mask = trie.match_step(step, &toks).unwrap();
        assert_eq!(mask.bits(), [false, true, true]);
    }

    #[test]
    fn punctuated_and_formatted_step() {
        let mut trie = TableTrie::new();
        trie.insert("1,200", EntryKind::Cell);
        trie.insert("Elevation (m)", EntryKind::Header);
        let step = "The ELEVATION (m) is 1200.";
        let m = trie.find_matches(step);
        let hits: Vec<_> = m.iter().map(|s| &step[s.original.clone()]).collect();
        assert_eq!(hits, ["ELEVATION (m)", "1200."]);
    }
}
