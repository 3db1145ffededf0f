use super::{check_same_shape, BinaryMask, MaskError, Result, SoftMask};

/// Probability clamp applied before taking logs in the focal loss.
pub const FOCAL_EPS: f64 = 1e-7;
pub const DICE_SMOOTH_HARD: f64 = 0.0;
pub const DICE_SMOOTH_SOFT: f64 = 1e-6;

/// Weights of the combined segmentation objective
/// `alpha * text + beta * dice + gamma_weight * focal`, plus the loss internals.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma_weight: f64,
    pub focal_gamma: f64,
    pub focal_alpha: f64,
    pub dice_smooth: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma_weight: 1.0,
            focal_gamma: 2.0,
            focal_alpha: 0.25,
            dice_smooth: DICE_SMOOTH_SOFT,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.alpha,
            self.beta,
            self.gamma_weight,
            self.focal_gamma,
            self.focal_alpha,
            self.dice_smooth,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(MaskError::InvalidParameter("loss weights must be finite"));
        }
        if self.alpha < 0.0 || self.beta < 0.0 || self.gamma_weight < 0.0 {
            return Err(MaskError::InvalidParameter("objective weights must be non-negative"));
        }
        if self.focal_gamma < 0.0 {
            return Err(MaskError::InvalidParameter("focal_gamma must be non-negative"));
        }
        if !(self.focal_alpha > 0.0 && self.focal_alpha <= 1.0) {
            return Err(MaskError::InvalidParameter("focal_alpha must lie in (0, 1]"));
        }
        if self.dice_smooth < 0.0 {
            return Err(MaskError::InvalidParameter("dice_smooth must be non-negative"));
        }
        Ok(())
    }
}

fn targets(pred: &SoftMask, target: &BinaryMask) -> Result<Vec<f64>> {
    check_same_shape(pred.shape(), target.shape())?;
    Ok(target.bits().map(|b| if b { 1.0 } else { 0.0 }).collect())
}

/// `1 - (2 Σ p·t + smooth) / (Σ p + Σ t + smooth)`.
///
/// A zero denominator (empty prediction and target, no smoothing) scores 0.
pub fn dice_loss(pred: &SoftMask, target: &BinaryMask, smooth: f64) -> Result<f64> {
    if !(smooth >= 0.0 && smooth.is_finite()) {
        return Err(MaskError::InvalidParameter("smooth must be finite and non-negative"));
    }
    let t = targets(pred, target)?;
    let (inter, sum_p, sum_t) = dice_sums(pred.probs(), &t);
    let denom = sum_p + sum_t + smooth;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 - (2.0 * inter + smooth) / denom)
}

fn dice_sums(p: &[f64], t: &[f64]) -> (f64, f64, f64) {
    p.iter().zip(t).fold((0.0, 0.0, 0.0), |(i, sp, st), (&p, &t)| {
        (i + p * t, sp + p, st + t)
    })
}

/// Analytic gradient of [`dice_loss`] with respect to each prediction entry.
pub fn dice_loss_grad(pred: &SoftMask, target: &BinaryMask, smooth: f64) -> Result<Vec<f64>> {
    let t = targets(pred, target)?;
    let (inter, sum_p, sum_t) = dice_sums(pred.probs(), &t);
    let denom = sum_p + sum_t + smooth;
    if denom == 0.0 {
        return Ok(vec![0.0; t.len()]);
    }
    let numer = 2.0 * inter + smooth;
    let d2 = denom * denom;
    Ok(t.iter().map(|&tk| -(2.0 * tk * denom - numer) / d2).collect())
}

/// Loss and d(loss)/dp for one pixel.
pub fn focal_pixel(p: f64, t: f64, gamma: f64, alpha: f64) -> (f64, f64) {
    let p = p.clamp(FOCAL_EPS, 1.0 - FOCAL_EPS);
    let (pt, at, sign) = if t > 0.5 {
        (p, alpha, 1.0)
    } else {
        (1.0 - p, 1.0 - alpha, -1.0)
    };
    let rest = 1.0 - pt;
    let loss = -at * rest.powf(gamma) * pt.ln();
    let dpt = if gamma == 0.0 {
        -at / pt
    } else {
        at * (gamma * rest.powf(gamma - 1.0) * pt.ln() - rest.powf(gamma) / pt)
    };
    (loss, dpt * sign)
}

/// Mean over pixels of `-alpha_t (1 - p_t)^gamma ln p_t`.
pub fn focal_loss(pred: &SoftMask, target: &BinaryMask, focal_gamma: f64, focal_alpha: f64) -> Result<f64> {
    let t = targets(pred, target)?;
    let n = t.len() as f64;
    let total: f64 = pred
        .probs()
        .iter()
        .zip(&t)
        .map(|(&p, &t)| focal_pixel(p, t, focal_gamma, focal_alpha).0)
        .sum();
    Ok(total / n)
}

/// Analytic gradient of [`focal_loss`]; zero where the clamp is active.
pub fn focal_loss_grad(pred: &SoftMask, target: &BinaryMask, focal_gamma: f64, focal_alpha: f64) -> Result<Vec<f64>> {
    let t = targets(pred, target)?;
    let n = t.len() as f64;
    Ok(pred
        .probs()
        .iter()
        .zip(&t)
        .map(|(&p, &t)| {
            if !(FOCAL_EPS..=1.0 - FOCAL_EPS).contains(&p) {
                return 0.0;
            }
            focal_pixel(p, t, focal_gamma, focal_alpha).1 / n
        })
        .collect())
}

/// `alpha * text_loss + beta * dice + gamma_weight * focal`.
///
/// The next-token text loss comes from a language model and is passed in.
pub fn segmentation_objective(
    pred: &SoftMask,
    target: &BinaryMask,
    weights: &LossWeights,
    text_loss: f64,
) -> Result<f64> {
    weights.validate()?;
    let dice = dice_loss(pred, target, weights.dice_smooth)?;
    let focal = focal_loss(pred, target, weights.focal_gamma, weights.focal_alpha)?;
    Ok(weights.alpha * text_loss + weights.beta * dice + weights.gamma_weight * focal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn soft(h: u32, w: u32, p: &[f64]) -> SoftMask {
        SoftMask::new(h, w, p.to_vec()).unwrap()
    }

    #[test]
    fn dice_examples() {
        let t = BinaryMask::from_u8(2, 2, &[1, 0, 0, 1]).unwrap();
        assert_eq!(dice_loss(&SoftMask::from_binary(&t), &t, 0.0).unwrap(), 0.0);
        let disjoint = BinaryMask::from_u8(2, 2, &[0, 1, 1, 0]).unwrap();
        assert_eq!(dice_loss(&SoftMask::from_binary(&disjoint), &t, 0.0).unwrap(), 1.0);
        // 1 - 2*1 / (2 + 2)
        assert_eq!(dice_loss(&soft(2, 2, &[0.5; 4]), &t, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn dice_hard_zero_iff_equal() {
        let t = BinaryMask::from_u8(1, 4, &[1, 1, 0, 0]).unwrap();
        let p = BinaryMask::from_u8(1, 4, &[1, 0, 0, 0]).unwrap();
        assert!(dice_loss(&SoftMask::from_binary(&p), &t, 0.0).unwrap() > 0.0);
    }

    #[test]
    fn dice_empty_both_is_zero() {
        let z = BinaryMask::zeros(2, 2).unwrap();
        assert_eq!(dice_loss(&SoftMask::from_binary(&z), &z, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn focal_single_pixel() {
        let t = BinaryMask::from_u8(1, 1, &[1]).unwrap();
        let l = focal_loss(&soft(1, 1, &[0.9]), &t, 2.0, 1.0).unwrap();
        let expected = 0.01 * -(0.9f64.ln());
        assert_relative_eq!(l, expected, max_relative = 1e-12);
        assert_relative_eq!(l, 1.0536e-3, max_relative = 1e-4);
    }

    #[test]
    fn focal_perfect_prediction_vanishes() {
        let t = BinaryMask::from_u8(1, 3, &[1, 0, 1]).unwrap();
        let l = focal_loss(&SoftMask::from_binary(&t), &t, 2.0, 0.25).unwrap();
        assert!(l < 1e-12, "{l}");
    }

    #[test]
    fn focal_gamma_zero_is_half_bce() {
        let t = BinaryMask::from_u8(1, 4, &[1, 0, 1, 0]).unwrap();
        let p = [0.2, 0.3, 0.8, 0.95];
        let bce: f64 = p
            .iter()
            .zip([1.0, 0.0, 1.0, 0.0])
            .map(|(&p, t): (&f64, f64)| -(t * p.ln() + (1.0 - t) * (1.0 - p).ln()))
            .sum::<f64>()
            / 4.0;
        let l = focal_loss(&soft(1, 4, &p), &t, 0.0, 0.5).unwrap();
        assert_relative_eq!(l, 0.5 * bce, max_relative = 1e-12);
    }

    #[test]
    fn objective_combines_terms() {
        let t = BinaryMask::from_u8(1, 2, &[1, 0]).unwrap();
        let p = soft(1, 2, &[0.7, 0.2]);
        let w = LossWeights {
            alpha: 2.0,
            beta: 0.5,
            gamma_weight: 3.0,
            ..LossWeights::default()
        };
        let expected = 2.0 * 1.5
            + 0.5 * dice_loss(&p, &t, w.dice_smooth).unwrap()
            + 3.0 * focal_loss(&p, &t, w.focal_gamma, w.focal_alpha).unwrap();
        assert_eq!(segmentation_objective(&p, &t, &w, 1.5).unwrap(), expected);
        let bad = LossWeights { focal_alpha: 0.0, ..w };
        assert!(segmentation_objective(&p, &t, &bad, 1.5).is_err());
    }

    #[test]
    fn loss_shape_mismatch() {
        let t = BinaryMask::zeros(2, 2).unwrap();
        let p = soft(1, 4, &[0.5; 4]);
        assert!(dice_loss(&p, &t, 0.0).is_err());
        assert!(focal_loss(&p, &t, 2.0, 0.25).is_err());
    }
}
