#![no_main]

use libfuzzer_sys::fuzz_target;
use tabroute_core::backends::parse_completion_response;
use tabroute_core::router::ModelTag;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(step) = parse_completion_response(s, 5, ModelTag::Small) {
            assert_eq!(step.tokens.len(), step.distributions.len());
            assert_eq!(step.token_count, step.tokens.len());
        }
    }
});
