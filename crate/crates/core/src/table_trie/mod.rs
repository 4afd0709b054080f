//! Table-grounded token detection.
//!
//! Headers and cells of a [`Table`] are normalized and inserted into a
//! word-level [`TableTrie`]. A reasoning step is normalized the same way and
//! scanned left to right with greedy longest-prefix matching; matched spans
//! are mapped back through the normalization offsets onto the generator's
//! token boundaries to produce a [`TokenMask`].

mod mask;
mod normalize;
mod table;
mod trie;

pub use mask::{partition, validate_token_ranges, TokenMask};
pub use normalize::{normalize, word_key, NormalizedText, OffsetSpan, Word};
pub use table::Table;
pub use trie::{EntryKind, SpanMatch, TableTrie, TrieEntry};
