#![no_main]

use libfuzzer_sys::fuzz_target;
use tabroute_core::eval::{metric_report, SweepResult};

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(r) = SweepResult::from_json(s) {
            let _ = metric_report(&r);
            let _ = r.to_csv();
            let back = SweepResult::from_json(&r.to_json()).expect("emitted result parses");
            assert_eq!(back.grid.len(), r.grid.len());
        }
    }
});
