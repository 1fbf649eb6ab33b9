#![no_main]

use cpm_core::config::ScenarioConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = ScenarioConfig::from_toml_str(text) {
        // Anything accepted must survive a round trip through the writer.
        let again = ScenarioConfig::from_toml_str(&config.to_toml_string()).expect("effective config re-parses");
        assert_eq!(config.to_toml_string(), again.to_toml_string());
    }
});
