#![no_main]

use bldc_sim::scenario::{apply_overrides, ScenarioConfig};
use libfuzzer_sys::fuzz_target;

// One `KEY=VALUE` override per line, applied to the default document.
fuzz_target!(|text: &str| {
    let overrides: Vec<String> = text.lines().map(str::to_owned).collect();
    let mut doc: toml::Table = ScenarioConfig::default().to_toml().parse().expect("defaults parse");
    let _ = apply_overrides(&mut doc, &overrides);
    let _ = ScenarioConfig::from_toml("", &overrides);
});
