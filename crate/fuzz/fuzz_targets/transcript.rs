#![no_main]

use csi_core::persist::{parse_transcript, render_transcript};
use csi_core::RoomId;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(messages) = parse_transcript(text, RoomId(0)) {
        let again = parse_transcript(&render_transcript(&messages), RoomId(0)).unwrap();
        assert_eq!(again, messages);
    }
});
