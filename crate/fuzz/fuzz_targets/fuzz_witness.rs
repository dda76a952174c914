#![no_main]

use ioss_net::pipeline::WitnessFile;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(wf) = serde_json::from_str::<WitnessFile>(text) {
            let _ = serde_json::to_string(&wf);
        }
    }
});
