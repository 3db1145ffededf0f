use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    iou_matched_semantic_scores, match_masks, mean_iou, meteor_score_with, recall, semantic_scores, EmbeddingProvider,
    EvalSample, MeteorParams, MetricError, SynonymTable, Thresholds,
};
use crate::markup::strip_markup;

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub thresholds: Thresholds,
    pub meteor: MeteorParams,
    pub synonyms: Option<Arc<SynonymTable>>,
    /// Count and exclude malformed samples instead of aborting.
    pub skip_invalid: bool,
    pub keep_per_sample: bool,
    /// Worker threads for per-sample evaluation; 1 runs inline.
    pub parallelism: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            thresholds: Thresholds::default(),
            meteor: MeteorParams::default(),
            synonyms: None,
            skip_invalid: false,
            keep_per_sample: false,
            parallelism: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub sample_id: String,
    pub miou: f64,
    pub recall: f64,
    pub ss: f64,
    pub siou: f64,
    pub i_ss: f64,
    pub i_siou: f64,
    /// Set when no pair exceeded the IoU threshold.
    pub i_flagged: bool,
    pub meteor: f64,
    pub n_gt: usize,
    pub n_pred: usize,
    pub n_true_positive: usize,
}

/// Aggregated metrics. Mask and phrase metrics plus METEOR are macro-averaged
/// over samples; recall is `n_true_positive / n_gt` over all GT masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub miou: f64,
    pub recall: f64,
    pub ss: f64,
    pub siou: f64,
    pub i_ss: f64,
    pub i_siou: f64,
    pub meteor: f64,
    pub n_samples: usize,
    pub n_gt: usize,
    pub n_pred: usize,
    pub n_true_positive: usize,
    pub n_invalid: usize,
    pub n_i_flagged: usize,
    pub embedding_provider: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_sample: Option<Vec<SampleMetrics>>,
}

pub fn evaluate_sample(
    sample: &EvalSample,
    provider: &dyn EmbeddingProvider,
    config: &EvalConfig,
) -> Result<SampleMetrics, MetricError> {
    sample.validate()?;
    let m = match_masks(&sample.pred, &sample.gt)?;
    let n_gt = sample.gt.len();
    let pred_phrases: Vec<&str> = sample.pred.iter().map(|e| e.phrase.as_str()).collect();
    let gt_phrases: Vec<&str> = sample.gt.iter().map(|e| e.phrase.as_str()).collect();
    let miou = mean_iou(&m, n_gt)?;
    let (rec, tp) = recall(&m, &pred_phrases, &gt_phrases, provider, config.thresholds)?;
    let (ss, siou) = semantic_scores(&m, &pred_phrases, &gt_phrases, provider)?;
    let imatched = iou_matched_semantic_scores(&m, &pred_phrases, &gt_phrases, provider, config.thresholds.iou)?;
    let meteor = meteor_score_with(
        &strip_markup(&sample.pred_sentence),
        &strip_markup(&sample.gt_sentence),
        &config.meteor,
        config.synonyms.as_deref(),
    );
    Ok(SampleMetrics {
        sample_id: sample.sample_id.clone(),
        miou,
        recall: rec,
        ss,
        siou,
        i_ss: imatched.i_ss,
        i_siou: imatched.i_siou,
        i_flagged: imatched.flagged,
        meteor,
        n_gt,
        n_pred: sample.pred.len(),
        n_true_positive: tp,
    })
}

/// Order-preserving accumulator; feeding the same per-sample results in the
/// same order always yields the same report.
#[derive(Debug)]
pub struct ReportBuilder {
    provider: String,
    skip_invalid: bool,
    sums: [f64; 6],
    n_samples: usize,
    n_gt: usize,
    n_pred: usize,
    n_tp: usize,
    n_invalid: usize,
    n_flagged: usize,
    per_sample: Option<Vec<SampleMetrics>>,
}

impl ReportBuilder {
    pub fn new(provider: &dyn EmbeddingProvider, config: &EvalConfig) -> Self {
        Self {
            provider: provider.name().to_string(),
            skip_invalid: config.skip_invalid,
            sums: [0.0; 6],
            n_samples: 0,
            n_gt: 0,
            n_pred: 0,
            n_tp: 0,
            n_invalid: 0,
            n_flagged: 0,
            per_sample: config.keep_per_sample.then(Vec::new),
        }
    }

    pub fn push(&mut self, sample_id: &str, result: Result<SampleMetrics, MetricError>) -> Result<(), MetricError> {
        let s = match result {
            Ok(s) => s,
            Err(e) if self.skip_invalid => {
                log::warn!("skipping sample {sample_id}: {e}");
                self.n_invalid += 1;
                return Ok(());
            }
            Err(e) => {
                return Err(MetricError::InvalidSample {
                    sample_id: sample_id.to_string(),
                    source: Box::new(e),
                })
            }
        };
        for (acc, v) in self.sums.iter_mut().zip([s.miou, s.ss, s.siou, s.i_ss, s.i_siou, s.meteor]) {
            *acc += v;
        }
        self.n_samples += 1;
        self.n_gt += s.n_gt;
        self.n_pred += s.n_pred;
        self.n_tp += s.n_true_positive;
        self.n_flagged += s.i_flagged as usize;
        if let Some(v) = self.per_sample.as_mut() {
            v.push(s);
        }
        Ok(())
    }

    pub fn n_invalid(&self) -> usize {
        self.n_invalid
    }

    pub fn finish(self) -> Result<MetricReport, MetricError> {
        if self.n_samples == 0 || self.n_gt == 0 {
            return Err(MetricError::NoSamples);
        }
        let n = self.n_samples as f64;
        let [miou, ss, siou, i_ss, i_siou, meteor] = self.sums.map(|s| s / n);
        Ok(MetricReport {
            miou,
            recall: self.n_tp as f64 / self.n_gt as f64,
            ss,
            siou,
            i_ss,
            i_siou,
            meteor,
            n_samples: self.n_samples,
            n_gt: self.n_gt,
            n_pred: self.n_pred,
            n_true_positive: self.n_tp,
            n_invalid: self.n_invalid,
            n_i_flagged: self.n_flagged,
            embedding_provider: self.provider,
            per_sample: self.per_sample,
        })
    }
}

/// Runs per-sample evaluation, optionally on a worker pool, keeping results
/// in input order.
pub struct Evaluator<'a> {
    provider: &'a dyn EmbeddingProvider,
    config: EvalConfig,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> Evaluator<'a> {
    pub fn new(provider: &'a dyn EmbeddingProvider, config: EvalConfig) -> Result<Self, MetricError> {
        config.thresholds.validate()?;
        let pool = if config.parallelism > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.parallelism)
                    .build()
                    .expect("thread pool"),
            )
        } else {
            None
        };
        Ok(Self { provider, config, pool })
    }

    pub fn builder(&self) -> ReportBuilder {
        ReportBuilder::new(self.provider, &self.config)
    }

    pub fn evaluate_batch(&self, samples: &[EvalSample]) -> Vec<Result<SampleMetrics, MetricError>> {
        let run = |s: &EvalSample| evaluate_sample(s, self.provider, &self.config);
        match &self.pool {
            Some(pool) => pool.install(|| samples.par_iter().map(run).collect()),
            None => samples.iter().map(run).collect(),
        }
    }
}

const BATCH: usize = 256;

/// Evaluates a stream of samples into one report.
pub fn evaluate_dataset(
    samples: impl IntoIterator<Item = EvalSample>,
    provider: &dyn EmbeddingProvider,
    config: &EvalConfig,
) -> Result<MetricReport, MetricError> {
    let evaluator = Evaluator::new(provider, config.clone())?;
    let mut builder = evaluator.builder();
    let mut batch = Vec::with_capacity(BATCH);
    let mut iter = samples.into_iter().peekable();
    while iter.peek().is_some() {
        batch.clear();
        batch.extend(iter.by_ref().take(BATCH));
        for (s, r) in batch.iter().zip(evaluator.evaluate_batch(&batch)) {
            builder.push(&s.sample_id, r)?;
        }
    }
    builder.finish()
}
