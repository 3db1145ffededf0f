#![no_main]

use groundseg::metrics::{meteor_score_with, MeteorParams, SynonymTable};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(t) = SynonymTable::parse(text) {
        let s = meteor_score_with(text, "the cup", &MeteorParams::default(), Some(&t));
        assert!((0.0..=1.0).contains(&s));
    }
});
