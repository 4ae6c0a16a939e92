#![no_main]

use libfuzzer_sys::fuzz_target;
use randhorizon::trainer::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ExperimentConfig::from_toml(text) {
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).expect("written config parses");
        assert_eq!(again, cfg);
    }
});
