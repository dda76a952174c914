#![no_main]

use ioss_net::report::Report;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(report) = serde_json::from_str::<Report>(text) {
            let _ = report.to_json();
        }
    }
});
