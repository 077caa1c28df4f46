#![no_main]

use libfuzzer_sys::fuzz_target;
use sbpm_core::tabular::Schema;

fuzz_target!(|data: &[u8]| {
    let Ok(schema) = serde_json::from_slice::<Schema>(data) else { return };
    let text = serde_json::to_string(&schema).unwrap();
    assert_eq!(serde_json::from_str::<Schema>(&text).unwrap(), schema);
});
