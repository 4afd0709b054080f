#![no_main]

use libfuzzer_sys::fuzz_target;
use tabroute_core::table_trie::normalize;

fuzz_target!(|data: &[u8]| {
    let Ok(raw) = std::str::from_utf8(data) else {
        return;
    };
    let n = normalize(raw);
    // idempotent, and the offset map tiles the normalized text
    assert_eq!(normalize(&n.text).text, n.text);
    let mut at = 0;
    for span in &n.offset_map {
        assert_eq!(span.normalized.start, at);
        assert!(span.original.end <= raw.len());
        at = span.normalized.end;
    }
    assert_eq!(at, n.text.len());
    for w in n.words() {
        assert!(n.to_original(w.range).is_some());
    }
});
