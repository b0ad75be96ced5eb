#![no_main]

use libfuzzer_sys::fuzz_target;
use resflow::harness::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = ExperimentConfig::parse(text) {
            cfg.validate().unwrap();
        }
    }
});
