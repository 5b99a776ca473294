#![no_main]

use hod::sim::TouchScenario;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = TouchScenario::parse(text) {
        // Whatever parses must serialize back to an equal scenario.
        let again = TouchScenario::parse(&s.to_config()).expect("serialized scenario parses");
        assert_eq!(again, s);
    }
});
