#![no_main]

use hod::sim::csv::{parse_series_csv_str, write_series_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(series) = parse_series_csv_str(text) {
        series.validate().expect("parsed series is valid");
        let mut buf = Vec::new();
        write_series_csv(&series, &mut buf).expect("write to memory");
        let again = parse_series_csv_str(std::str::from_utf8(&buf).unwrap()).expect("written series parses");
        assert_eq!(again.values.len(), series.values.len());
    }
});
