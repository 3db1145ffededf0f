use groundseg::mask::{iou, rle_area, rle_decode, rle_encode, rle_iou, BinaryMask, RleMask};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn naive_iou(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[test]
fn rle_iou_equals_pixel_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let (h, w) = (rng.random_range(1..=16), rng.random_range(1..=16));
        let density_a = rng.random_range(0.0..1.0);
        let density_b = rng.random_range(0.0..1.0);
        let a: Vec<bool> = (0..h * w).map(|_| rng.random_bool(density_a)).collect();
        let b: Vec<bool> = (0..h * w).map(|_| rng.random_bool(density_b)).collect();
        let ma = BinaryMask::from_bits(h, w, &a).unwrap();
        let mb = BinaryMask::from_bits(h, w, &b).unwrap();
        let expected = naive_iou(&a, &b);
        let (ra, rb) = (rle_encode(&ma), rle_encode(&mb));
        assert!((rle_iou(&ra, &rb).unwrap() - expected).abs() <= 1e-12);
        assert!((iou(&ma, &mb).unwrap() - expected).abs() <= 1e-12);
        assert_eq!(rle_area(&ra), a.iter().filter(|x| **x).count() as u64);
    }
}

#[test]
fn shape_mismatch_is_an_error() {
    let a = RleMask::new(2, 2, vec![4]).unwrap();
    let b = RleMask::new(1, 4, vec![4]).unwrap();
    assert!(rle_iou(&a, &b).is_err());
}

#[test]
fn invalid_counts_rejected() {
    assert!(RleMask::new(2, 2, vec![1, 1]).is_err());
    assert!(RleMask::new(2, 2, vec![1, 0, 3]).is_err());
    assert!(RleMask::new(1, 2, vec![u64::MAX, 3]).is_err());
    assert!(serde_json::from_str::<RleMask>(r#"{"size":[2,2],"counts":[5]}"#).is_err());
}

proptest! {
    #[test]
    fn encode_decode_roundtrip(h in 1u32..20, w in 1u32..20, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = BinaryMask::from_fn(h, w, |_, _| rng.random_bool(0.3)).unwrap();
        let r = rle_encode(&m);
        prop_assert_eq!(rle_decode(&r), m.clone());
        prop_assert_eq!(r.counts().iter().sum::<u64>(), (h * w) as u64);
        prop_assert!(r.counts().iter().skip(1).all(|&c| c > 0));
        let json = serde_json::to_string(&r).unwrap();
        prop_assert_eq!(serde_json::from_str::<RleMask>(&json).unwrap(), r);
    }

    #[test]
    fn iou_symmetric_and_bounded(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = rle_encode(&BinaryMask::from_fn(7, 5, |_, _| rng.random_bool(0.5)).unwrap());
        let b = rle_encode(&BinaryMask::from_fn(7, 5, |_, _| rng.random_bool(0.5)).unwrap());
        let x = rle_iou(&a, &b).unwrap();
        prop_assert_eq!(x, rle_iou(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert_eq!(rle_iou(&a, &a).unwrap(), 1.0);
    }
}
