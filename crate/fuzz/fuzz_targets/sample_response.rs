#![no_main]

use std::sync::Arc;

use libfuzzer_sys::fuzz_target;
use sbpm_provider::wire::{decode_records, SampleResponse};

fuzz_target!(|data: &[u8]| {
    let Ok(resp) = serde_json::from_slice::<SampleResponse>(data) else { return };
    let _ = decode_records(&Arc::new(resp.schema), &resp.records);
});
