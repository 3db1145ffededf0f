#![no_main]

use groundseg::metrics::{EmbeddingProvider, FileEmbeddings};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(e) = FileEmbeddings::from_bytes(data) {
        let _ = e.embed("cup");
        assert!(e.dimension() > 0);
    }
});
