#![no_main]

use csi_core::options::fixture_options;
use csi_core::survey::parse_responses;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(sr) = parse_responses(text, &fixture_options()) {
        assert!(sr.responses.values().all(|o| o.index() < sr.options.len()));
    }
});
