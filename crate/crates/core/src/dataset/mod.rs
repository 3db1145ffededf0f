//! Image-set sampling, QA filtering and statistics for multi-image grounded
//! reasoning datasets.
//!
//! Corpus records carry an opaque feature vector plus object/part
//! annotations. Features are serialized as base64 little-endian `f32` with an
//! explicit `feature_dim`.

mod filter;
mod sampling;
mod stats;

use std::collections::HashMap;
use std::io::BufRead;

use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::markup::{Annotation, AnnotationIndex, EntityIdentifier, EntityRef};

pub use filter::{check_pair, filter_qa, FilterConfig, FilterReport, FilterRule};
pub use sampling::{
    cosine_distance, knn_query, sample_corpus, sample_image_sets, CompatibilityTable, Neighbor, Strategy,
    DEFAULT_CATEGORY_K, DEFAULT_NN_K,
};
pub use stats::{dataset_stats, DatasetStats, LevelDistribution};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {reason}")]
    Schema { line: usize, reason: String },
    #[error("image `{image_id}`: {reason}")]
    InvalidRecord { image_id: String, reason: String },
    #[error("duplicate image id `{0}`")]
    DuplicateId(String),
    #[error("feature dimension {got} differs from corpus dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero-norm feature vector")]
    ZeroNorm,
    #[error("need more than {k} records for a {k}-NN query, corpus has {available}")]
    CorpusTooSmall { k: usize, available: usize },
    #[error("unknown image `{0}`")]
    UnknownImage(String),
    #[error("invalid sample set: {0}")]
    InvalidSampleSet(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// `[x1, y1, x2, y2]` in pixels.
pub type BBox = [f64; 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartRecord {
    pub name: String,
    pub part_id: u8,
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub name: String,
    pub object_id: u8,
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parts: Vec<PartRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ImageRecordJson", into = "ImageRecordJson")]
pub struct ImageRecord {
    pub image_id: String,
    pub height: u32,
    pub width: u32,
    pub feature: Vec<f32>,
    pub objects: Vec<ObjectRecord>,
    /// Originating annotation source, e.g. a dataset name.
    pub source: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ImageRecordJson {
    image_id: String,
    height: u32,
    width: u32,
    feature: String,
    feature_dim: usize,
    #[serde(default)]
    objects: Vec<ObjectRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<String>,
}

impl TryFrom<ImageRecordJson> for ImageRecord {
    type Error = String;

    fn try_from(j: ImageRecordJson) -> std::result::Result<Self, String> {
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(j.feature.as_bytes())
            .map_err(|e| format!("feature is not base64: {e}"))?;
        if j.feature_dim.checked_mul(4) != Some(bytes.len()) {
            return Err(format!(
                "feature has {} bytes, feature_dim {} needs {}",
                bytes.len(),
                j.feature_dim,
                j.feature_dim.saturating_mul(4)
            ));
        }
        let feature = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let rec = ImageRecord {
            image_id: j.image_id,
            height: j.height,
            width: j.width,
            feature,
            objects: j.objects,
            source: j.source,
        };
        rec.validate().map_err(|e| e.to_string())?;
        Ok(rec)
    }
}

impl From<ImageRecord> for ImageRecordJson {
    fn from(r: ImageRecord) -> Self {
        let bytes: Vec<u8> = r.feature.iter().flat_map(|x| x.to_le_bytes()).collect();
        ImageRecordJson {
            image_id: r.image_id,
            height: r.height,
            width: r.width,
            feature_dim: r.feature.len(),
            feature: base64::engine::general_purpose::STANDARD.encode(bytes),
            objects: r.objects,
            source: r.source,
        }
    }
}

impl ImageRecord {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| DatasetError::InvalidRecord {
            image_id: self.image_id.clone(),
            reason,
        };
        if self.image_id.is_empty() {
            return Err(bad("empty image id".into()));
        }
        if self.feature.is_empty() {
            return Err(bad("empty feature vector".into()));
        }
        if self.feature.iter().any(|x| !x.is_finite()) {
            return Err(bad("non-finite feature value".into()));
        }
        let (w, h) = (self.width as f64, self.height as f64);
        let check_box = |what: &str, b: &BBox| {
            let [x1, y1, x2, y2] = *b;
            let ok = b.iter().all(|v| v.is_finite())
                && 0.0 <= x1
                && x1 <= x2
                && x2 <= w
                && 0.0 <= y1
                && y1 <= y2
                && y2 <= h;
            if ok {
                Ok(())
            } else {
                Err(bad(format!("{what} bbox {b:?} outside {}x{}", self.width, self.height)))
            }
        };
        let mut objects = std::collections::HashSet::new();
        for o in &self.objects {
            if o.object_id > 99 {
                return Err(bad(format!("object id {} exceeds 99", o.object_id)));
            }
            if !objects.insert(o.object_id) {
                return Err(bad(format!("duplicate object id {}", o.object_id)));
            }
            check_box(&o.name, &o.bbox)?;
            let mut parts = std::collections::HashSet::new();
            for p in &o.parts {
                if p.part_id > 99 {
                    return Err(bad(format!("part id {} exceeds 99", p.part_id)));
                }
                if !parts.insert(p.part_id) {
                    return Err(bad(format!("duplicate part id {} on object {}", p.part_id, o.object_id)));
                }
                check_box(&p.name, &p.bbox)?;
            }
        }
        Ok(())
    }

    pub fn object_names(&self) -> impl Iterator<Item = &str> {
        self.objects.iter().map(|o| o.name.as_str())
    }
}

/// Records indexed by id, all with the same feature dimension.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    records: Vec<ImageRecord>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(records: Vec<ImageRecord>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(records.len());
        let dim = records.first().map(|r| r.feature.len());
        for (i, r) in records.iter().enumerate() {
            r.validate()?;
            if let Some(d) = dim {
                if r.feature.len() != d {
                    return Err(DatasetError::DimensionMismatch {
                        expected: d,
                        got: r.feature.len(),
                    });
                }
            }
            if by_id.insert(r.image_id.clone(), i).is_some() {
                return Err(DatasetError::DuplicateId(r.image_id.clone()));
            }
        }
        Ok(Self { records, by_id })
    }

    /// One [`ImageRecord`] per non-blank line.
    pub fn from_jsonl(reader: impl BufRead) -> Result<Self> {
        Self::new(read_jsonl(reader)?)
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn get(&self, image_id: &str) -> Option<&ImageRecord> {
        self.by_id.get(image_id).map(|&i| &self.records[i])
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Annotations of a sample set, with image indices following the order of
    /// `image_ids` starting at 1.
    pub fn annotation_index(&self, image_ids: &[String]) -> Result<AnnotationIndex> {
        let mut index = AnnotationIndex::new();
        for (j, id) in image_ids.iter().enumerate() {
            let rec = self.get(id).ok_or_else(|| DatasetError::UnknownImage(id.clone()))?;
            let image_index = u8::try_from(j + 1).map_err(|_| DatasetError::InvalidSampleSet("too many images".into()))?;
            for o in &rec.objects {
                let key = EntityRef {
                    image_index,
                    object_id: o.object_id,
                    part_id: None,
                };
                index.insert(
                    key,
                    Annotation {
                        name: o.name.clone(),
                        mask_ref: o.mask_ref.clone(),
                    },
                );
                for p in &o.parts {
                    index.insert(
                        EntityRef {
                            part_id: Some(p.part_id),
                            ..key
                        },
                        Annotation {
                            name: p.name.clone(),
                            mask_ref: p.mask_ref.clone(),
                        },
                    );
                }
            }
        }
        Ok(index)
    }
}

/// Parses JSONL, skipping blank lines. Errors carry 1-based line numbers.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| DatasetError::Json { line: i + 1, source })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingStrategy {
    NearestNeighbor,
    ObjectCategory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSet {
    pub image_ids: Vec<String>,
    pub strategy: SamplingStrategy,
    pub anchor_id: String,
}

impl SampleSet {
    pub fn validate(&self) -> Result<()> {
        let n = self.image_ids.len();
        if !(2..=3).contains(&n) {
            return Err(DatasetError::InvalidSampleSet(format!("{n} images, expected 2 or 3")));
        }
        let unique: std::collections::HashSet<_> = self.image_ids.iter().collect();
        if unique.len() != n {
            return Err(DatasetError::InvalidSampleSet("duplicate image ids".into()));
        }
        if !self.image_ids.contains(&self.anchor_id) {
            return Err(DatasetError::InvalidSampleSet(format!("anchor `{}` not in set", self.anchor_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuestionCategory {
    Functional,
    Spatial,
    Numerical,
    OpenEnded,
}

impl QuestionCategory {
    pub const ALL: [QuestionCategory; 4] = [Self::Functional, Self::Spatial, Self::Numerical, Self::OpenEnded];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Functional => "functional",
            Self::Spatial => "spatial",
            Self::Numerical => "numerical",
            Self::OpenEnded => "open-ended",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAPair {
    pub question: String,
    /// Answer text containing identifier tokens such as `table_101`.
    pub answer: String,
    pub category: QuestionCategory,
    /// One single-reference identifier per target, filled in by filtering.
    #[serde(default)]
    pub resolved_targets: Vec<EntityIdentifier>,
    pub sample: SampleSet,
}
