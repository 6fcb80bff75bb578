#![no_main]

use csi_core::options::{parse_options, validate_options, write_options};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(options) = parse_options(text) {
        validate_options(&options).expect("parsed options are valid");
        assert_eq!(parse_options(&write_options(&options)).unwrap(), options);
    }
});
