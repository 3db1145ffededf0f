#![no_main]

use groundseg::square::{read_tensors, write_tensors};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(ts) = read_tensors(data) else { return };
    let mut out = Vec::new();
    write_tensors(&mut out, &ts).unwrap();
    let back = read_tensors(&out).expect("written tensors read back");
    assert_eq!(back.len(), ts.len());
    for t in &ts {
        let _ = t.to_matrix();
        let _ = t.to_matrices();
    }
});
