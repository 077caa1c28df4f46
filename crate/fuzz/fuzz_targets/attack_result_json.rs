#![no_main]

use libfuzzer_sys::fuzz_target;
use sbpm_attacks::reconsyn::AttackResult;
use sbpm_core::tabular::gen_censuslite;

fuzz_target!(|data: &[u8]| {
    let Ok(result) = serde_json::from_slice::<AttackResult>(data) else { return };
    let _ = result.config.validate();
    let _ = result.decode_rows(gen_censuslite(1, 0).schema());
});
