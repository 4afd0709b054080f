use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-token table/text labels for one step. `true` means table token.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenMask(Vec<bool>);

impl TokenMask {
    pub fn new(bits: Vec<bool>) -> Self {
        TokenMask(bits)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn n_tab(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    pub fn n_text(&self) -> usize {
        self.len() - self.n_tab()
    }

    /// Any-overlap projection: a token is marked when it shares at least one
    /// byte with a span. Both inputs must be sorted by start offset.
    pub fn from_spans(spans: &[Range<usize>], token_ranges: &[Range<usize>]) -> Self {
        let mut bits = vec![false; token_ranges.len()];
        let mut s = 0;
        for (bit, tok) in bits.iter_mut().zip(token_ranges) {
            while s < spans.len() && spans[s].end <= tok.start {
                s += 1;
            }
            *bit = spans[s..]
                .iter()
                .take_while(|span| span.start < tok.end)
                .any(|span| span.start < span.end && tok.start < tok.end);
        }
        TokenMask(bits)
    }

    /// Splits token indices into (table, text). Both lists keep ascending order.
    pub fn partition(&self) -> (Vec<usize>, Vec<usize>) {
        let (tab, text): (Vec<_>, Vec<_>) = (0..self.len()).partition(|&i| self.0[i]);
        (tab, text)
    }
}

/// Same as [`TokenMask::partition`], checking the mask against the step's token list.
pub fn partition<T>(step_tokens: &[T], mask: &TokenMask) -> Result<(Vec<usize>, Vec<usize>)> {
    if step_tokens.len() != mask.len() {
        return Err(Error::input(format!(
            "mask has {} bits for {} tokens",
            mask.len(),
            step_tokens.len()
        )));
    }
    Ok(mask.partition())
}

/// Token ranges must start at 0, abut one another, end at `text.len()` and
/// sit on char boundaries.
pub fn validate_token_ranges(text: &str, ranges: &[Range<usize>]) -> Result<()> {
    let mut expected = 0;
    for (i, r) in ranges.iter().enumerate() {
        if r.start != expected {
            return Err(Error::input(format!(
                "token {i} starts at {} but previous token ended at {expected}",
                r.start
            )));
        }
        if r.end < r.start || r.end > text.len() {
            return Err(Error::input(format!("token {i} range {r:?} out of bounds")));
        }
        if !text.is_char_boundary(r.end) {
            return Err(Error::input(format!("token {i} ends inside a character")));
        }
        expected = r.end;
    }
    if expected != text.len() {
        return Err(Error::input(format!(
            "tokens cover {expected} of {} bytes",
            text.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn partition_examples() {
        let m = TokenMask::new(vec![true, false, true]);
        assert_eq!(m.partition(), (vec![0, 2], vec![1]));
        let all = TokenMask::new(vec![true; 4]);
        assert_eq!(all.partition(), (vec![0, 1, 2, 3], vec![]));
    }

    #[test]
    fn partition_length_mismatch() {
        let m = TokenMask::new(vec![true]);
        assert!(matches!(partition(&["a", "b"], &m), Err(Error::Input(_))));
    }

    #[test]
    fn malformed_ranges() {
        assert!(validate_token_ranges("abcd", &[0..2, 2..4]).is_ok());
        assert!(validate_token_ranges("", &[]).is_ok());
        assert!(validate_token_ranges("abcd", &[0..2, 3..4]).is_err());
        assert!(validate_token_ranges("abcd", &[0..3, 2..4]).is_err());
        assert!(validate_token_ranges("abcd", std::slice::from_ref(&(0..2))).is_err());
        assert!(validate_token_ranges("é", &[0..1, 1..2]).is_err());
    }

    #[test]
    fn spans_to_tokens() {
        let toks = [0..3, 3..6, 6..9, 9..12];
        let m = TokenMask::from_spans(&[2..4, 9..10], &toks);
        assert_eq!(m.bits(), [true, true, false, true]);
    }

    proptest! {
        #[test]
        fn partition_is_exact(bits in proptest::collection::vec(any::<bool>(), 64)) {
            let m = TokenMask::new(bits.clone());
            let (tab, text) = m.partition();
            prop_assert_eq!(tab.len() + text.len(), 64);
            let mut all: Vec<_> = tab.iter().chain(&text).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..64).collect::<Vec<_>>());
            prop_assert!(tab.iter().all(|&i| bits[i]));
            prop_assert!(text.iter().all(|&i| !bits[i]));
            prop_assert!(tab.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
