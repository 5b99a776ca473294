#![no_main]

use hod::sim::csv::parse_value_stream;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(values) = parse_value_stream(text) {
        assert!(values.iter().all(|v| v.is_finite()));
        assert!(values.len() <= text.lines().count());
    }
});
