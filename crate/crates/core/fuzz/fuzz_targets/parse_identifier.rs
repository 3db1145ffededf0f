#![no_main]

use groundseg::markup::{find_identifiers, parse_identifier};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    if let Ok(id) = parse_identifier(text) {
        assert_eq!(parse_identifier(&id.token()).as_ref(), Ok(&id));
    }
    for (span, token) in find_identifiers(text) {
        assert_eq!(&text[span], token);
        let _ = parse_identifier(token);
    }
});
