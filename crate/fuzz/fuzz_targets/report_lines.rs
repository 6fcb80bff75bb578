#![no_main]

use csi_core::sim::parse_report_lines;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_report_lines(text);
    }
});
