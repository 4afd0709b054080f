#![no_main]

//! Input: table JSON, a 0xff byte, then the step text. Tokens are cut at
//! every character boundary whose byte index is a multiple of 3.

use libfuzzer_sys::fuzz_target;
use tabroute_core::table_trie::{Table, TableTrie};

fuzz_target!(|data: &[u8]| {
    let Some(split) = data.iter().position(|&b| b == 0xff) else {
        return;
    };
    let (Ok(table), Ok(text)) = (std::str::from_utf8(&data[..split]), std::str::from_utf8(&data[split + 1..])) else {
        return;
    };
    let Ok(table) = Table::from_json_str(table) else {
        return;
    };
    let mut ranges = Vec::new();
    let mut start = 0;
    for (i, _) in text.char_indices().skip(1) {
        if i % 3 == 0 {
            ranges.push(start..i);
            start = i;
        }
    }
    if start < text.len() {
        ranges.push(start..text.len());
    }
    let trie = TableTrie::from_table(&table, true);
    let mask = trie.match_step(text, &ranges).expect("ranges tile the text");
    assert_eq!(mask.len(), ranges.len());
    for m in trie.find_matches(text) {
        assert!(m.original.end <= text.len());
    }
});
