#![no_main]

use bldc_sim::cycle::parse_cycle;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    // anything accepted must survive a write/read round trip
    if let Ok(cycle) = parse_cycle("fuzz", text) {
        let again = parse_cycle("fuzz", &cycle.to_csv()).expect("serialized cycle parses");
        assert_eq!(again, cycle);
        let t = cycle.start() + 0.5 * cycle.duration();
        assert!(cycle.speed_at(t).is_finite());
    }
});
