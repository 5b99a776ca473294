#![no_main]

use hod::model::Model;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = Model::from_bytes(data) {
        let bytes = model.to_bytes().expect("loaded model serializes");
        assert_eq!(Model::from_bytes(&bytes).expect("round trip"), model);
        // A loaded model must classify any window of its width without panicking.
        let c = model.classifier();
        let mut scratch = vec![0.0; c.scratch_len()];
        let p = c.predict_proba(&vec![0.5; c.input_width()], &mut scratch);
        assert!((0.0..=1.0).contains(&p) || p.is_nan());
    }
});
