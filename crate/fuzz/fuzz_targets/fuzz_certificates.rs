#![no_main]

use ioss_net::pipeline::VerifiedClasses;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(vc) = serde_json::from_str::<VerifiedClasses>(text) {
            for cert in vc.traj.values().chain(vc.lyap.values()) {
                let _ = cert.validate();
            }
            let _ = serde_json::to_string(&vc);
        }
    }
});
