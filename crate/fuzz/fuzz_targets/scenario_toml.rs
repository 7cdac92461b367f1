#![no_main]

use bldc_sim::scenario::ScenarioConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(config) = ScenarioConfig::from_toml(text, &[]) {
        let again = ScenarioConfig::from_toml(&config.to_toml(), &[]).expect("serialized config parses");
        assert_eq!(again, config);
    }
});
