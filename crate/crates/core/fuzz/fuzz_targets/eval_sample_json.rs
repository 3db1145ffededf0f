#![no_main]

use groundseg::metrics::{evaluate_sample, EvalConfig, EvalSample, HashEmbeddings};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(sample) = serde_json::from_slice::<EvalSample>(data) else { return };
    if sample.images.iter().any(|s| u64::from(s.height) * u64::from(s.width) > 1 << 16) {
        return;
    }
    if sample.validate().is_ok() {
        let _ = evaluate_sample(&sample, &HashEmbeddings::default(), &EvalConfig::default());
    }
});
