use groundseg::markup::{parse_identifier, parse_response, serialize_response, GroundedResponse, Segment};
use proptest::prelude::*;

fn segment(num_images: u32) -> impl Strategy<Value = Segment> {
    let words = "[a-z]{1,8}( [a-z]{1,8}){0,3}";
    prop_oneof![
        words.prop_map(|w| Segment::Prose(format!(" {w} "))),
        (words, 1..=num_images).prop_map(|(text, image_index)| Segment::Grounded { text, image_index }),
    ]
}

fn response() -> impl Strategy<Value = GroundedResponse> {
    (1u32..=4)
        .prop_flat_map(|n| (Just(n), proptest::collection::vec(segment(n), 1..8)))
        .prop_filter_map("valid", |(n, segs)| GroundedResponse::build(n, &segs).ok())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn parse_serialize_identity(r in response()) {
        let text = serialize_response(&r);
        let back = parse_response(&text, r.num_images(), false).unwrap();
        prop_assert_eq!(&back, &r);
        prop_assert_eq!(serialize_response(&back), text);
    }

    #[test]
    fn per_image_order_is_dense(r in response()) {
        for j in 1..=r.num_images() {
            let orders: Vec<u32> = r.phrases_for_image(j).map(|p| p.within_image_order).collect();
            prop_assert_eq!(orders, (1..=r.phrases_for_image(j).count() as u32).collect::<Vec<_>>());
        }
    }

    #[test]
    fn parser_never_panics(s in "\\PC{0,64}", n in 0u32..4, strict in any::<bool>()) {
        let _ = parse_response(&s, n, strict);
        let _ = parse_identifier(&s);
    }
}
