#![no_main]

use libfuzzer_sys::fuzz_target;
use sbpm_workbench::ExperimentSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = ExperimentSpec::from_toml(text) else { return };
    let again = ExperimentSpec::from_toml(&spec.to_toml()).expect("rendered spec parses");
    assert_eq!(again.config_hash(), spec.config_hash());
});
