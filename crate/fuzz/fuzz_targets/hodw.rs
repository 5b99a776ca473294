#![no_main]

use hod::preprocess::{parse_hodw, write_hodw};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = parse_hodw(data) {
        let mut buf = Vec::new();
        write_hodw(&ds, &mut buf).expect("write to memory");
        assert_eq!(parse_hodw(&buf).expect("written dataset parses"), ds);
    }
});
