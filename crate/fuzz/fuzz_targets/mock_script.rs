#![no_main]

use libfuzzer_sys::fuzz_target;
use tabroute_core::backends::MockBackend;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(backend) = MockBackend::from_jsonl_str(s) {
            // whatever loads must dump and reload to the same steps
            let dumped = MockBackend::to_jsonl(backend.steps());
            let again = MockBackend::from_jsonl_str(&dumped).expect("dump reloads");
            assert_eq!(again.steps(), backend.steps());
        }
    }
});
