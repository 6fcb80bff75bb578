#![no_main]

use csi_core::counting::Tally;
use csi_core::options::fixture_options;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let options = fixture_options();
    let mut tally = Tally::new(&options);
    tally.add(text);
    let weights = tally.weights();
    assert_eq!(weights.len(), options.len());
    assert!(weights.iter().all(|w| *w >= 0.0 && w.is_finite()));
});
