#![no_main]

use groundseg::dataset::CompatibilityTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(t) = CompatibilityTable::from_json(text) {
        assert!(t.compatible("cup", "cup"));
    }
});
