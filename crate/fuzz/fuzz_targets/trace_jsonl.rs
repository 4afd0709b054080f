#![no_main]

use libfuzzer_sys::fuzz_target;
use tabroute_core::pipeline::Trace;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(traces) = Trace::parse_jsonl(s) {
            let again = Trace::parse_jsonl(&Trace::to_jsonl(&traces)).expect("emitted traces parse");
            assert_eq!(again.len(), traces.len());
        }
    }
});
