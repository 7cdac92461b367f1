#![no_main]

use bldc_sim::dtc::{parse_table_csv, table_to_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(entries) = parse_table_csv(text) {
        assert_eq!(parse_table_csv(&table_to_csv(&entries)), Ok(entries));
    }
});
