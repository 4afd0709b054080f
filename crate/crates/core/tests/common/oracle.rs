//! Brute-force reference for table-span token masks, plus a random
//! (table, step) generator.

use std::collections::BTreeSet;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;
use tabroute_core::table_trie::{normalize, Table};

/// Greedy longest match by direct substring tests on the space-joined word
/// keys, checking every entry at every word start.
pub fn oracle_mask(entries: &[String], text: &str, tokens: &[Range<usize>]) -> Vec<bool> {
    let norm = normalize(text);
    let words = norm.words();
    let mut keys = String::new();
    let mut starts = Vec::with_capacity(words.len());
    for w in &words {
        if !keys.is_empty() {
            keys.push(' ');
        }
        starts.push(keys.len());
        keys.push_str(&w.key);
    }
    let patterns: BTreeSet<String> = entries
        .iter()
        .map(|e| {
            normalize(e)
                .words()
                .iter()
                .map(|w| w.key.clone())
                .collect::<Vec<_>>()
                .join(" ")
        })
        .filter(|p| !p.is_empty())
        .collect();

    let mut mask = vec![false; tokens.len()];
    let mut i = 0;
    while i < words.len() {
        let rest = &keys[starts[i]..];
        let best = patterns
            .iter()
            .filter(|p| rest.starts_with(p.as_str()) && (rest.len() == p.len() || rest.as_bytes()[p.len()] == b' '))
            .map(|p| p.split(' ').count())
            .max();
        match best {
            Some(n) => {
                let span = norm
                    .to_original(words[i].range.start..words[i + n - 1].range.end)
                    .expect("matched words are in bounds");
                for (m, t) in mask.iter_mut().zip(tokens) {
                    if t.start < span.end && span.start < t.end {
                        *m = true;
                    }
                }
                i += n;
            }
            None => i += 1,
        }
    }
    mask
}

const VOCAB: &[&str] = &[
    "new", "york", "san", "francisco", "oslo", "bergen", "total", "revenue", "(m)", "2021", "4,808", "4808",
    "1.5", "-", "n/a", "city", "population", "the", "of", "and", "rate", "12%", "elevation", "q1", "art", "smart",
    "café", "north–south",
];

fn word(rng: &mut impl Rng) -> String {
    let w = *VOCAB.choose(rng).unwrap();
    match rng.gen_range(0..4) {
        0 => w.to_uppercase(),
        1 => {
            let mut c = w.chars();
            c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
        }
        _ => w.to_string(),
    }
}

fn phrase(rng: &mut impl Rng) -> String {
    let n = rng.gen_range(1..=3);
    (0..n).map(|_| word(rng)).collect::<Vec<_>>().join(" ")
}

/// Table with at most `max_entries` non-blank entries.
pub fn random_table(rng: &mut impl Rng, max_entries: usize) -> Table {
    let cols = rng.gen_range(1..=5usize.min(max_entries));
    let headers: Vec<String> = (0..cols).map(|_| phrase(rng)).collect();
    let rows_max = (max_entries - cols) / cols;
    let n_rows = rng.gen_range(0..=rows_max);
    let rows = (0..n_rows)
        .map(|_| {
            (0..cols)
                .map(|_| if rng.gen_bool(0.15) { String::new() } else { phrase(rng) })
                .collect()
        })
        .collect();
    Table::new("random", headers, rows).unwrap()
}

/// Step text of at most `max_tokens` tokens, cut at random character boundaries.
pub fn random_step(rng: &mut impl Rng, max_tokens: usize) -> (String, Vec<Range<usize>>) {
    let n_words = rng.gen_range(1..=max_tokens / 2);
    let mut text = String::new();
    for i in 0..n_words {
        if i > 0 {
            text.push_str(["  ", " ", " ", " ", "\n", "\t", ", "].choose(rng).unwrap());
        }
        if rng.gen_bool(0.1) {
            text.push_str(["(", "\"", "“"].choose(rng).unwrap());
        }
        text.push_str(&word(rng));
        if rng.gen_bool(0.2) {
            text.push_str([".", ",", ")", ":", "?"].choose(rng).unwrap());
        }
    }
    let bounds: Vec<usize> = text.char_indices().map(|(i, _)| i).skip(1).collect();
    let n_cuts = rng.gen_range(0..=bounds.len().min(max_tokens - 1));
    let mut cuts: Vec<usize> = bounds.choose_multiple(rng, n_cuts).copied().collect();
    cuts.sort_unstable();
    let mut tokens = Vec::with_capacity(cuts.len() + 1);
    let mut start = 0;
    for c in cuts {
        tokens.push(start..c);
        start = c;
    }
    tokens.push(start..text.len());
    (text, tokens)
}

pub fn trie_entries(table: &Table) -> Vec<String> {
    table.entries().filter(|e| !e.trim().is_empty()).map(str::to_owned).collect()
}
