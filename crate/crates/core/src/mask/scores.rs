use super::{check_same_shape, iou, BinaryMask, MaskError, Result};

/// Object visibility of a set of targets.
///
/// Each target contributes `area(mask) / image_area`; the mean ratio is
/// scaled by the disparity weight `min ratio / max ratio` (1 for a single
/// target, 0 when some target is empty).
pub fn visibility_score(targets: &[BinaryMask], image_areas: &[u64]) -> Result<f64> {
    if targets.is_empty() {
        return Err(MaskError::EmptyTargets);
    }
    if targets.len() != image_areas.len() {
        return Err(MaskError::AreaCountMismatch {
            targets: targets.len(),
            areas: image_areas.len(),
        });
    }
    let mut ratios = Vec::with_capacity(targets.len());
    for (index, (mask, &area)) in targets.iter().zip(image_areas).enumerate() {
        if area == 0 {
            return Err(MaskError::InvalidImageArea { index });
        }
        ratios.push(mask.area() as f64 / area as f64);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let max = ratios.iter().copied().fold(f64::MIN, f64::max);
    let min = ratios.iter().copied().fold(f64::MAX, f64::min);
    let weight = if ratios.len() == 1 || max == min {
        1.0
    } else if max == 0.0 {
        0.0
    } else {
        min / max
    };
    Ok((mean * weight).clamp(0.0, 1.0))
}

/// Cosegmentation precision (pixel accuracy) and Jaccard index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosegScores {
    pub precision: f64,
    pub jaccard: f64,
}

pub fn coseg_scores(pred: &BinaryMask, gt: &BinaryMask) -> Result<CosegScores> {
    check_same_shape(pred.shape(), gt.shape())?;
    let total = pred.len() as u64;
    let differing: u64 = pred
        .words
        .iter()
        .zip(&gt.words)
        .map(|(a, b)| (a ^ b).count_ones() as u64)
        .sum();
    Ok(CosegScores {
        precision: (total - differing) as f64 / total as f64,
        jaccard: iou(pred, gt)?,
    })
}
