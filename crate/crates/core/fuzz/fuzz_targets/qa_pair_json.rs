#![no_main]

use groundseg::dataset::{dataset_stats, QAPair};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(pair) = serde_json::from_slice::<QAPair>(data) else { return };
    let _ = pair.sample.validate();
    let _ = dataset_stats(&[pair], None);
});
