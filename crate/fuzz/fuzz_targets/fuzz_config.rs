#![no_main]

use ioss_net::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = RunConfig::from_json(text) {
            // anything that parses must also survive downstream queries
            let _ = cfg.validate();
            let _ = cfg.classes();
            let _ = cfg.hash();
        }
    }
});
