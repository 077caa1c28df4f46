#![no_main]

use std::sync::Arc;

use libfuzzer_sys::fuzz_target;
use sbpm_core::tabular::{gen_censuslite, gen_gauss};
use sbpm_provider::wire::{decode_records, encode_records, MetricsRequest};

fuzz_target!(|data: &[u8]| {
    let Ok(req) = serde_json::from_slice::<MetricsRequest>(data) else { return };
    for schema in [gen_censuslite(1, 0).schema().clone(), gen_gauss(2, 1, 0).schema().clone()] {
        let schema = Arc::new(schema);
        if let Ok(ds) = decode_records(&schema, &req.records) {
            let back = decode_records(&schema, &encode_records(&ds)).expect("encoded rows decode");
            assert_eq!(back.records(), ds.records());
        }
    }
});
