#![no_main]

use groundseg::markup::{parse_response, serialize_response};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&head, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let num_images = u32::from(head & 0x7);
    let strict = head & 0x80 != 0;
    if let Ok(r) = parse_response(text, num_images, strict) {
        let again = parse_response(&serialize_response(&r), num_images, false).expect("serialized form parses");
        assert_eq!(serialize_response(&again), serialize_response(&r));
    }
});
