#![no_main]

use groundseg::dataset::Corpus;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(corpus) = Corpus::from_jsonl(data) {
        for r in corpus.records() {
            assert!(r.validate().is_ok());
        }
    }
});
