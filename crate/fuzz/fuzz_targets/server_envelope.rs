#![no_main]

use csi_core::wire::parse_server_line;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_server_line(text);
    }
});
