//! Measurable core of multi-image pixel-grounded reasoning.
//!
//! The crate is split along the data that flows through an evaluation:
//!
//! - [`mask`]: binary masks, the row-major run-length codec, IoU, Dice and
//!   focal losses, visibility and cosegmentation scores.
//! - [`markup`]: the `<p>phrase</p> [SEG] (IMAGEk)` response grammar and the
//!   `name_XYY[ZZ]` entity identifier grammar.
//! - [`metrics`]: text–mask matching, mIoU, Recall, SS/SIoU, I-SS/I-SIoU and
//!   METEOR, plus dataset-level aggregation.
//! - [`square`]: a 64-bit reference of the shared query-attention relational
//!   encoder and the pooling/projection ablation baselines.
//! - [`dataset`]: feature-space image-set sampling, the QA filtering cascade
//!   and dataset statistics.

pub mod dataset;
pub mod markup;
pub mod mask;
pub mod metrics;
pub mod square;

pub use markup::{parse_identifier, parse_response, serialize_response, EntityIdentifier, GroundedPhrase, GroundedResponse};
pub use mask::{BinaryMask, RleMask, SoftMask};
pub use metrics::{evaluate_dataset, EmbeddingProvider, EvalSample, MetricReport};
