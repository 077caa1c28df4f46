#![no_main]

use libfuzzer_sys::fuzz_target;
use sbpm_core::tabular::{parse_csv, render_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(ds) = parse_csv(text) else { return };
    // anything that parses must survive a render/parse round trip
    let again = render_csv(&ds).expect("parsed data renders");
    let back = parse_csv(&again).expect("rendered data parses");
    assert_eq!(back.records(), ds.records());
});
