//! Text–mask matching and the grounded-reasoning metric suite.
//!
//! Per sample, predicted and ground-truth (phrase, mask) entries are paired
//! one-to-one inside each image by [`match_masks`]. The pairing feeds:
//!
//! - mIoU: summed pair IoU over the number of GT masks;
//! - Recall: pairs with IoU and phrase similarity both above threshold;
//! - SS / SIoU: phrase cosine similarity and token-set IoU over all pairs;
//! - I-SS / I-SIoU: the same, restricted to pairs above the IoU threshold.
//!
//! METEOR compares the full predicted and GT sentences.

pub mod embedding;
pub mod meteor;
mod report;
pub mod text;

pub use embedding::{
    cosine, phrase_similarity, write_embeddings, EmbeddingError, EmbeddingProvider, FileEmbeddings, HashEmbeddings,
    HASH_FALLBACK_NAME,
};
pub use meteor::{meteor_score, meteor_score_with, MeteorParams, SynonymTable};
pub use report::{evaluate_dataset, evaluate_sample, EvalConfig, Evaluator, MetricReport, ReportBuilder, SampleMetrics};
pub use text::token_set_iou;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{rle_iou, MaskError, RleMask};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("mask error: {0}")]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("sample has no ground-truth targets")]
    EmptyGroundTruth,
    #[error("{side} entry {index} references image {image}, but the sample has {num_images} images")]
    ImageOutOfRange {
        side: &'static str,
        index: usize,
        image: u32,
        num_images: usize,
    },
    #[error("{side} entry {index}: mask is {mask_h}x{mask_w} but image {image} is {image_h}x{image_w}")]
    MaskImageMismatch {
        side: &'static str,
        index: usize,
        image: u32,
        mask_h: u32,
        mask_w: u32,
        image_h: u32,
        image_w: u32,
    },
    #[error("number of GT masks must be positive")]
    ZeroGroundTruth,
    #[error("threshold {0} is outside [0, 1]")]
    BadThreshold(f64),
    #[error("sample {sample_id}: {source}")]
    InvalidSample {
        sample_id: String,
        #[source]
        source: Box<MetricError>,
    },
    #[error("no valid samples to evaluate")]
    NoSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSize {
    pub height: u32,
    pub width: u32,
}

/// One grounded (phrase, mask) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEntry {
    /// 1-based image index.
    #[serde(rename = "image")]
    pub image_index: u32,
    pub phrase: String,
    pub mask: RleMask,
}

/// One multi-image QA instance with GT and predicted targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    pub sample_id: String,
    pub images: Vec<ImageSize>,
    #[serde(default)]
    pub question: String,
    pub gt: Vec<TargetEntry>,
    #[serde(default)]
    pub pred: Vec<TargetEntry>,
    #[serde(default)]
    pub gt_sentence: String,
    #[serde(default)]
    pub pred_sentence: String,
}

impl EvalSample {
    pub fn validate(&self) -> Result<(), MetricError> {
        if self.gt.is_empty() {
            return Err(MetricError::EmptyGroundTruth);
        }
        for (side, entries) in [("gt", &self.gt), ("pred", &self.pred)] {
            for (index, e) in entries.iter().enumerate() {
                let Some(size) = (e.image_index as usize)
                    .checked_sub(1)
                    .and_then(|i| self.images.get(i))
                else {
                    return Err(MetricError::ImageOutOfRange {
                        side,
                        index,
                        image: e.image_index,
                        num_images: self.images.len(),
                    });
                };
                if (e.mask.height(), e.mask.width()) != (size.height, size.width) {
                    return Err(MetricError::MaskImageMismatch {
                        side,
                        index,
                        image: e.image_index,
                        mask_h: e.mask.height(),
                        mask_w: e.mask.width(),
                        image_h: size.height,
                        image_w: size.width,
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub pred_idx: usize,
    pub gt_idx: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
}

impl MatchResult {
    pub fn n_gt(&self) -> usize {
        self.pairs.len() + self.unmatched_gt.len()
    }
}

/// Greedy one-to-one assignment inside each image.
///
/// Repeatedly takes the highest-IoU pair among unassigned entries, breaking
/// ties by smaller GT index, then smaller prediction index. Zero-IoU pairs
/// are still recorded.
pub fn match_masks(pred: &[TargetEntry], gt: &[TargetEntry]) -> Result<MatchResult, MetricError> {
    let mut candidates = Vec::new();
    for (gi, g) in gt.iter().enumerate() {
        for (pi, p) in pred.iter().enumerate() {
            if p.image_index == g.image_index {
                candidates.push(MatchedPair {
                    pred_idx: pi,
                    gt_idx: gi,
                    iou: rle_iou(&p.mask, &g.mask)?,
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.iou
            .total_cmp(&a.iou)
            .then(a.gt_idx.cmp(&b.gt_idx))
            .then(a.pred_idx.cmp(&b.pred_idx))
    });
    let mut gt_used = vec![false; gt.len()];
    let mut pred_used = vec![false; pred.len()];
    let mut pairs = Vec::new();
    for c in candidates {
        if !gt_used[c.gt_idx] && !pred_used[c.pred_idx] {
            gt_used[c.gt_idx] = true;
            pred_used[c.pred_idx] = true;
            pairs.push(c);
        }
    }
    let unused = |used: &[bool]| used.iter().enumerate().filter(|(_, u)| !**u).map(|(i, _)| i).collect();
    Ok(MatchResult {
        pairs,
        unmatched_gt: unused(&gt_used),
        unmatched_pred: unused(&pred_used),
    })
}

/// Summed pair IoU over `n_gt`; unmatched GT masks count as 0.
pub fn mean_iou(m: &MatchResult, n_gt: usize) -> Result<f64, MetricError> {
    if n_gt == 0 {
        return Err(MetricError::ZeroGroundTruth);
    }
    Ok(m.pairs.iter().map(|p| p.iou).sum::<f64>() / n_gt as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub iou: f64,
    pub similarity: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            iou: 0.5,
            similarity: 0.5,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), MetricError> {
        for t in [self.iou, self.similarity] {
            if !(0.0..=1.0).contains(&t) {
                return Err(MetricError::BadThreshold(t));
            }
        }
        Ok(())
    }
}

/// Recall and true-positive count. A pair is a true positive when its mask
/// IoU and its phrase similarity both strictly exceed their thresholds.
pub fn recall<S: AsRef<str>>(
    m: &MatchResult,
    pred_phrases: &[S],
    gt_phrases: &[S],
    provider: &dyn EmbeddingProvider,
    thresholds: Thresholds,
) -> Result<(f64, usize), MetricError> {
    thresholds.validate()?;
    let n_gt = m.n_gt();
    if n_gt == 0 {
        return Err(MetricError::ZeroGroundTruth);
    }
    let mut tp = 0;
    for p in &m.pairs {
        if p.iou > thresholds.iou {
            let sim = phrase_similarity(provider, pred_phrases[p.pred_idx].as_ref(), gt_phrases[p.gt_idx].as_ref())?;
            if sim > thresholds.similarity {
                tp += 1;
            }
        }
    }
    Ok((tp as f64 / n_gt as f64, tp))
}

/// Per-pair (cosine similarity clamped to [0, 1], token-set IoU).
fn pair_semantics<S: AsRef<str>>(
    p: &MatchedPair,
    pred_phrases: &[S],
    gt_phrases: &[S],
    provider: &dyn EmbeddingProvider,
) -> Result<(f64, f64), MetricError> {
    let (a, b) = (pred_phrases[p.pred_idx].as_ref(), gt_phrases[p.gt_idx].as_ref());
    let sim = phrase_similarity(provider, a, b)?.max(0.0);
    Ok((sim, token_set_iou(a, b)))
}

/// SS and SIoU over all matched pairs, normalized by the GT count.
pub fn semantic_scores<S: AsRef<str>>(
    m: &MatchResult,
    pred_phrases: &[S],
    gt_phrases: &[S],
    provider: &dyn EmbeddingProvider,
) -> Result<(f64, f64), MetricError> {
    let n_gt = m.n_gt();
    if n_gt == 0 {
        return Err(MetricError::ZeroGroundTruth);
    }
    let (mut ss, mut siou) = (0.0, 0.0);
    for p in &m.pairs {
        let (s, i) = pair_semantics(p, pred_phrases, gt_phrases, provider)?;
        ss += s;
        siou += i;
    }
    Ok((ss / n_gt as f64, siou / n_gt as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IouMatchedScores {
    pub i_ss: f64,
    pub i_siou: f64,
    /// No pair exceeded the IoU threshold; both scores are 0.
    pub flagged: bool,
}

/// SS and SIoU averaged over the pairs whose IoU exceeds `iou_thresh`.
pub fn iou_matched_semantic_scores<S: AsRef<str>>(
    m: &MatchResult,
    pred_phrases: &[S],
    gt_phrases: &[S],
    provider: &dyn EmbeddingProvider,
    iou_thresh: f64,
) -> Result<IouMatchedScores, MetricError> {
    if !(0.0..=1.0).contains(&iou_thresh) {
        return Err(MetricError::BadThreshold(iou_thresh));
    }
    let (mut ss, mut siou, mut n) = (0.0, 0.0, 0usize);
    for p in m.pairs.iter().filter(|p| p.iou > iou_thresh) {
        let (s, i) = pair_semantics(p, pred_phrases, gt_phrases, provider)?;
        ss += s;
        siou += i;
        n += 1;
    }
    if n == 0 {
        return Ok(IouMatchedScores {
            i_ss: 0.0,
            i_siou: 0.0,
            flagged: true,
        });
    }
    Ok(IouMatchedScores {
        i_ss: ss / n as f64,
        i_siou: siou / n as f64,
        flagged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{rle_encode, BinaryMask};

    fn entry(image: u32, phrase: &str, bits: &[u8]) -> TargetEntry {
        TargetEntry {
            image_index: image,
            phrase: phrase.into(),
            mask: rle_encode(&BinaryMask::from_u8(2, 2, bits).unwrap()),
        }
    }

    #[test]
    fn single_pair_and_cross_image() {
        let g = [entry(1, "cup", &[1, 0, 0, 0])];
        let p = [entry(1, "cup", &[1, 0, 0, 0])];
        let m = match_masks(&p, &g).unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].iou, 1.0);

        let p2 = [entry(2, "cup", &[1, 0, 0, 0])];
        let m = match_masks(&p2, &g).unwrap();
        assert!(m.pairs.is_empty());
        assert_eq!((m.unmatched_gt.as_slice(), m.unmatched_pred.as_slice()), (&[0][..], &[0][..]));
    }

    #[test]
    fn zero_iou_pairs_are_recorded() {
        let g = [entry(1, "a", &[1, 0, 0, 0])];
        let p = [entry(1, "a", &[0, 0, 0, 1])];
        let m = match_masks(&p, &g).unwrap();
        assert_eq!(m.pairs.len(), 1);
        assert_eq!(m.pairs[0].iou, 0.0);
    }

    #[test]
    fn greedy_prefers_best_global_pair() {
        // pred0 overlaps gt0 (1/2) and gt1 (1/1); greedy takes pred0-gt1 first
        let g = [entry(1, "a", &[1, 1, 0, 0]), entry(1, "b", &[1, 0, 0, 0])];
        let p = [entry(1, "x", &[1, 0, 0, 0]), entry(1, "y", &[0, 1, 0, 0])];
        let m = match_masks(&p, &g).unwrap();
        let got: Vec<_> = m.pairs.iter().map(|q| (q.pred_idx, q.gt_idx)).collect();
        assert_eq!(got, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn mean_iou_examples() {
        let m = MatchResult {
            pairs: vec![MatchedPair {
                pred_idx: 0,
                gt_idx: 0,
                iou: 0.5,
            }],
            unmatched_gt: vec![1],
            unmatched_pred: vec![],
        };
        assert_eq!(mean_iou(&m, 2).unwrap(), 0.25);
        assert_eq!(mean_iou(&MatchResult::default(), 3).unwrap(), 0.0);
        assert!(mean_iou(&m, 0).is_err());
    }

    fn pair(pred_idx: usize, gt_idx: usize, iou: f64) -> MatchedPair {
        MatchedPair { pred_idx, gt_idx, iou }
    }

    #[test]
    fn recall_examples() {
        let h = HashEmbeddings::default();
        let phr = ["red cup", "blue bowl", "lamp", "chair"];
        let exact = MatchResult {
            pairs: vec![pair(0, 0, 1.0)],
            ..Default::default()
        };
        assert_eq!(recall(&exact, &phr[..1], &phr[..1], &h, Thresholds::default()).unwrap(), (1.0, 1));
        let low = MatchResult {
            pairs: vec![pair(0, 0, 0.4)],
            ..Default::default()
        };
        assert_eq!(recall(&low, &phr[..1], &phr[..1], &h, Thresholds::default()).unwrap(), (0.0, 0));

        // 4 GT: two qualifying, one below IoU, one unmatched
        let m = MatchResult {
            pairs: vec![pair(0, 0, 0.9), pair(1, 1, 0.75), pair(2, 2, 0.3)],
            unmatched_gt: vec![3],
            unmatched_pred: vec![],
        };
        assert_eq!(recall(&m, &phr, &phr, &h, Thresholds::default()).unwrap(), (0.5, 2));
    }

    #[test]
    fn semantic_examples() {
        let h = HashEmbeddings::default();
        let one = MatchResult {
            pairs: vec![pair(0, 0, 0.2)],
            ..Default::default()
        };
        let (ss, siou) = semantic_scores(&one, &["coffee table"], &["table"], &h).unwrap();
        assert_eq!(siou, 0.5);
        assert!(ss > 0.0 && ss <= 1.0);

        let (ss, siou) = semantic_scores(&one, &["lamp"], &["lamp"], &h).unwrap();
        assert_eq!((ss, siou), (1.0, 1.0));

        let halved = MatchResult {
            pairs: vec![pair(0, 0, 0.2)],
            unmatched_gt: vec![1],
            unmatched_pred: vec![],
        };
        let (ss, siou) = semantic_scores(&halved, &["lamp"], &["lamp", "sofa"], &h).unwrap();
        assert_eq!((ss, siou), (0.5, 0.5));
    }

    #[test]
    fn iou_matched_examples() {
        let h = HashEmbeddings::default();
        let pred = ["lamp", "big sofa", "rug"];
        let gt = ["lamp", "sofa", "mat"];
        let all_above = MatchResult {
            pairs: vec![pair(0, 0, 0.9), pair(1, 1, 0.6)],
            ..Default::default()
        };
        let s = iou_matched_semantic_scores(&all_above, &pred, &gt, &h, 0.5).unwrap();
        assert!(!s.flagged);
        assert_eq!(s.i_siou, (1.0 + 0.5) / 2.0);

        let none = MatchResult {
            pairs: vec![pair(0, 0, 0.5)],
            ..Default::default()
        };
        let s = iou_matched_semantic_scores(&none, &pred, &gt, &h, 0.5).unwrap();
        assert_eq!((s.i_ss, s.i_siou, s.flagged), (0.0, 0.0, true));

        // filter then hand-average: only pairs 0 and 2 exceed 0.5
        let mixed = MatchResult {
            pairs: vec![pair(0, 0, 0.8), pair(1, 1, 0.1), pair(2, 2, 0.7)],
            ..Default::default()
        };
        let s = iou_matched_semantic_scores(&mixed, &pred, &gt, &h, 0.5).unwrap();
        assert_eq!(s.i_siou, (1.0 + 0.0) / 2.0);
        let rug_mat = phrase_similarity(&h, "rug", "mat").unwrap().max(0.0);
        assert_eq!(s.i_ss, (1.0 + rug_mat) / 2.0);
    }

    #[test]
    fn sample_validation() {
        let mut s = EvalSample {
            sample_id: "s".into(),
            images: vec![ImageSize { height: 2, width: 2 }],
            question: String::new(),
            gt: vec![entry(1, "a", &[1, 0, 0, 0])],
            pred: vec![entry(2, "a", &[1, 0, 0, 0])],
            gt_sentence: String::new(),
            pred_sentence: String::new(),
        };
        assert!(matches!(s.validate(), Err(MetricError::ImageOutOfRange { side: "pred", .. })));
        s.pred.clear();
        s.images[0].width = 3;
        assert!(matches!(s.validate(), Err(MetricError::MaskImageMismatch { .. })));
        s.images[0].width = 2;
        assert!(s.validate().is_ok());
        s.gt.clear();
        assert!(matches!(s.validate(), Err(MetricError::EmptyGroundTruth)));
    }
}
