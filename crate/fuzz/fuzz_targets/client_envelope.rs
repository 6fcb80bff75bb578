#![no_main]

use csi_core::wire::{lines, parse_client_line};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for line in lines(text) {
        // Accepted envelopes must survive a re-encode unchanged.
        if let Ok(env) = parse_client_line(line) {
            assert_eq!(parse_client_line(&env.to_line()), Ok(env));
        }
    }
});
