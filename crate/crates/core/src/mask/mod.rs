//! Binary segmentation masks and the metrics/losses defined over them.
//!
//! Masks are stored row-major: pixel `(row, col)` lives at bit index
//! `row * width + col`. All functions here are pure.

mod loss;
mod rle;
mod scores;

pub use loss::{
    dice_loss, dice_loss_grad, focal_loss, focal_loss_grad, focal_pixel, segmentation_objective, LossWeights, DICE_SMOOTH_HARD,
    DICE_SMOOTH_SOFT, FOCAL_EPS,
};
pub use rle::{rle_area, rle_decode, rle_encode, rle_iou, RleMask};
pub use scores::{coseg_scores, visibility_score, CosegScores};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaskError {
    #[error("shape mismatch: {left_h}x{left_w} vs {right_h}x{right_w}")]
    ShapeMismatch {
        left_h: u32,
        left_w: u32,
        right_h: u32,
        right_w: u32,
    },
    #[error("mask dimensions must be at least 1x1, got {height}x{width}")]
    InvalidDimensions { height: u32, width: u32 },
    #[error("data length {got} does not match {height}x{width}")]
    DataLength { height: u32, width: u32, got: usize },
    #[error("run lengths sum to {got}, expected {expected}")]
    RleSum { expected: u64, got: u64 },
    #[error("zero-length run at position {index}")]
    RleZeroRun { index: usize },
    #[error("probability at index {index} is outside [0, 1]: {value}")]
    InvalidProbability { index: usize, value: f64 },
    #[error("at least one target mask is required")]
    EmptyTargets,
    #[error("{targets} targets but {areas} image areas")]
    AreaCountMismatch { targets: usize, areas: usize },
    #[error("image area must be positive (target {index})")]
    InvalidImageArea { index: usize },
    #[error("invalid loss parameter: {0}")]
    InvalidParameter(&'static str),
}

pub type Result<T> = std::result::Result<T, MaskError>;

pub(crate) fn check_dims(height: u32, width: u32) -> Result<usize> {
    if height == 0 || width == 0 {
        return Err(MaskError::InvalidDimensions { height, width });
    }
    Ok(height as usize * width as usize)
}

pub(crate) fn check_same_shape(a: (u32, u32), b: (u32, u32)) -> Result<()> {
    if a != b {
        return Err(MaskError::ShapeMismatch {
            left_h: a.0,
            left_w: a.1,
            right_h: b.0,
            right_w: b.1,
        });
    }
    Ok(())
}

/// A hard 0/1 mask packed 64 pixels per word.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: u32,
    width: u32,
    words: Vec<u64>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BinaryMask")
            .field("height", &self.height)
            .field("width", &self.width)
            .field("area", &self.area())
            .finish()
    }
}

impl BinaryMask {
    /// All-background mask.
    pub fn zeros(height: u32, width: u32) -> Result<Self> {
        let n = check_dims(height, width)?;
        Ok(Self {
            height,
            width,
            words: vec![0; n.div_ceil(64)],
        })
    }

    pub fn from_fn(height: u32, width: u32, mut f: impl FnMut(u32, u32) -> bool) -> Result<Self> {
        let mut m = Self::zeros(height, width)?;
        for r in 0..height {
            for c in 0..width {
                if f(r, c) {
                    m.set(r, c, true);
                }
            }
        }
        Ok(m)
    }

    /// Builds a mask from row-major bits.
    pub fn from_bits(height: u32, width: u32, bits: &[bool]) -> Result<Self> {
        let n = check_dims(height, width)?;
        if bits.len() != n {
            return Err(MaskError::DataLength {
                height,
                width,
                got: bits.len(),
            });
        }
        let mut m = Self::zeros(height, width)?;
        for (i, &b) in bits.iter().enumerate() {
            if b {
                m.words[i / 64] |= 1 << (i % 64);
            }
        }
        Ok(m)
    }

    /// Builds a mask from row-major bytes; any nonzero byte is foreground.
    pub fn from_u8(height: u32, width: u32, data: &[u8]) -> Result<Self> {
        let bits: Vec<bool> = data.iter().map(|&v| v != 0).collect();
        Self::from_bits(height, width, &bits)
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn shape(&self) -> (u32, u32) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.height as usize * self.width as usize
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    pub fn get(&self, row: u32, col: u32) -> bool {
        self.get_index(row as usize * self.width as usize + col as usize)
    }

    pub fn get_index(&self, i: usize) -> bool {
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, row: u32, col: u32, value: bool) {
        let i = row as usize * self.width as usize + col as usize;
        if value {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    /// Row-major pixel iterator.
    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len()).map(move |i| self.get_index(i))
    }

    /// Number of foreground pixels.
    pub fn area(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn intersection_area(&self, other: &BinaryMask) -> Result<u64> {
        check_same_shape(self.shape(), other.shape())?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as u64)
            .sum())
    }

    pub fn union_area(&self, other: &BinaryMask) -> Result<u64> {
        check_same_shape(self.shape(), other.shape())?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a | b).count_ones() as u64)
            .sum())
    }
}

/// Intersection over union; two empty masks score 1.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let inter = a.intersection_area(b)?;
    let union = a.union_area(b)?;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Per-pixel probabilities of foreground.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    height: u32,
    width: u32,
    probs: Vec<f64>,
}

impl SoftMask {
    pub fn new(height: u32, width: u32, probs: Vec<f64>) -> Result<Self> {
        let n = check_dims(height, width)?;
        if probs.len() != n {
            return Err(MaskError::DataLength {
                height,
                width,
                got: probs.len(),
            });
        }
        if let Some((index, &value)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !(0.0..=1.0).contains(*p))
        {
            return Err(MaskError::InvalidProbability { index, value });
        }
        Ok(Self { height, width, probs })
    }

    /// Hard 0/1 probabilities from a binary mask.
    pub fn from_binary(mask: &BinaryMask) -> Self {
        Self {
            height: mask.height,
            width: mask.width,
            probs: mask.bits().map(|b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn shape(&self) -> (u32, u32) {
        (self.height, self.width)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_identity_disjoint_and_half() {
        let a = BinaryMask::from_u8(2, 2, &[1, 1, 0, 0]).unwrap();
        let b = BinaryMask::from_u8(2, 2, &[1, 1, 1, 1]).unwrap();
        let c = BinaryMask::from_u8(2, 2, &[0, 0, 1, 1]).unwrap();
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &c).unwrap(), 0.0);
        assert_eq!(iou(&a, &b).unwrap(), 0.5);
    }

    #[test]
    fn iou_empty_pair_is_one() {
        let z = BinaryMask::zeros(3, 5).unwrap();
        assert_eq!(iou(&z, &z).unwrap(), 1.0);
    }

    #[test]
    fn iou_shape_mismatch() {
        let a = BinaryMask::zeros(2, 3).unwrap();
        let b = BinaryMask::zeros(3, 2).unwrap();
        assert!(matches!(iou(&a, &b), Err(MaskError::ShapeMismatch { .. })));
    }

    #[test]
    fn rejects_degenerate_dims_and_lengths() {
        assert!(BinaryMask::zeros(0, 4).is_err());
        assert!(BinaryMask::from_u8(2, 2, &[1, 0, 1]).is_err());
        assert!(SoftMask::new(1, 2, vec![0.5, 1.5]).is_err());
        assert!(SoftMask::new(1, 2, vec![0.5, f64::NAN]).is_err());
    }

    #[test]
    fn set_get_across_word_boundary() {
        let mut m = BinaryMask::zeros(9, 9).unwrap();
        m.set(7, 1, true);
        assert!(m.get(7, 1));
        assert_eq!(m.area(), 1);
        m.set(7, 1, false);
        assert!(m.is_empty());
    }
}
