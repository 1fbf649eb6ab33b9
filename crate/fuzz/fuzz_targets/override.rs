#![no_main]

use cpm_core::config::{Override, ScenarioConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let overrides: Vec<Override> = text.lines().filter_map(|l| Override::parse(l).ok()).collect();
    let _ = ScenarioConfig::from_toml_with_overrides("seed = 1\nnum_packets = 10\n", &overrides);
});
