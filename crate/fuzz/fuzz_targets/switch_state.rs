#![no_main]

use bldc_sim::inverter::SwitchState;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(sw) = text.parse::<SwitchState>() {
        assert_eq!(sw.to_string().parse::<SwitchState>(), Ok(sw));
    }
});
