#![no_main]

use libfuzzer_sys::fuzz_target;
use tabroute_core::table_trie::{Table, TableTrie};

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(table) = Table::from_csv_str(s) {
            let _ = TableTrie::from_table(&table, true);
            let _ = table.to_markdown();
        }
    }
});
