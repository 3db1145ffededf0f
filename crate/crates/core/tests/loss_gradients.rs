use groundseg::mask::{dice_loss, dice_loss_grad, focal_loss, focal_loss_grad, BinaryMask, SoftMask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn random_case(rng: &mut ChaCha8Rng) -> (Vec<f64>, BinaryMask) {
    let probs: Vec<f64> = (0..64).map(|_| rng.random_range(0.05..0.95)).collect();
    let target = BinaryMask::from_fn(8, 8, |_, _| rng.random_bool(0.4)).unwrap();
    (probs, target)
}

fn finite_difference(probs: &[f64], k: usize, f: impl Fn(&SoftMask) -> f64) -> f64 {
    let mut plus = probs.to_vec();
    let mut minus = probs.to_vec();
    plus[k] += H;
    minus[k] -= H;
    let fp = f(&SoftMask::new(8, 8, plus).unwrap());
    let fm = f(&SoftMask::new(8, 8, minus).unwrap());
    (fp - fm) / (2.0 * H)
}

#[test]
fn dice_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for trial in 0..100 {
        let (probs, target) = random_case(&mut rng);
        let smooth = if trial % 2 == 0 { 0.0 } else { 1e-6 };
        let pred = SoftMask::new(8, 8, probs.clone()).unwrap();
        let grad = dice_loss_grad(&pred, &target, smooth).unwrap();
        for k in 0..64 {
            let fd = finite_difference(&probs, k, |p| dice_loss(p, &target, smooth).unwrap());
            assert!(rel_err(grad[k], fd) < TOL, "trial {trial} pixel {k}: {} vs {fd}", grad[k]);
        }
    }
}

#[test]
fn focal_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for trial in 0..100 {
        let (probs, target) = random_case(&mut rng);
        let gamma = [0.0, 1.0, 2.0, 2.5][trial % 4];
        let alpha = rng.random_range(0.1..0.9);
        let pred = SoftMask::new(8, 8, probs.clone()).unwrap();
        let grad = focal_loss_grad(&pred, &target, gamma, alpha).unwrap();
        for k in 0..64 {
            let fd = finite_difference(&probs, k, |p| focal_loss(p, &target, gamma, alpha).unwrap());
            assert!(rel_err(grad[k], fd) < TOL, "trial {trial} pixel {k}: {} vs {fd}", grad[k]);
        }
    }
}

#[test]
fn focal_gradient_zero_under_clamp() {
    let target = BinaryMask::from_u8(1, 2, &[1, 0]).unwrap();
    let pred = SoftMask::new(1, 2, vec![0.0, 1.0]).unwrap();
    assert_eq!(focal_loss_grad(&pred, &target, 2.0, 0.25).unwrap(), vec![0.0, 0.0]);
    assert!(focal_loss(&pred, &target, 2.0, 0.25).unwrap().is_finite());
}
