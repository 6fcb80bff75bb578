#![no_main]

use csi_core::options::fixture_options;
use csi_core::relay::parse_llm_response;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let options = fixture_options();
    if let Ok(d) = parse_llm_response(text, &options) {
        assert!(d.top_options.iter().all(|(id, w)| id.index() < options.len() && *w >= 0.0));
    }
});
