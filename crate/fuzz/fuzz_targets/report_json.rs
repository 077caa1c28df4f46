#![no_main]

use libfuzzer_sys::fuzz_target;
use sbpm_workbench::RunReport;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(report) = RunReport::from_json(text) {
        let _ = report.render();
        let _ = report.tidy_csv();
    }
});
