#![no_main]

use groundseg::mask::{rle_area, rle_decode, rle_encode, RleMask};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(rle) = serde_json::from_slice::<RleMask>(data) else { return };
    // keep decoded masks small
    if u64::from(rle.height()) * u64::from(rle.width()) > 1 << 20 {
        return;
    }
    let mask = rle_decode(&rle);
    assert_eq!(mask.area(), rle_area(&rle));
    assert_eq!(rle_decode(&rle_encode(&mask)), mask);
});
