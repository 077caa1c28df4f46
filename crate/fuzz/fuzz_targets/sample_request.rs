#![no_main]

use libfuzzer_sys::fuzz_target;
use sbpm_provider::wire::SampleRequest;

fuzz_target!(|data: &[u8]| {
    if let Ok(req) = serde_json::from_slice::<SampleRequest>(data) {
        let text = serde_json::to_string(&req).unwrap();
        assert_eq!(serde_json::from_str::<SampleRequest>(&text).unwrap(), req);
    }
});
