use std::collections::HashSet;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Corpus, DatasetError, ImageRecord, Result, SampleSet, SamplingStrategy};

pub const DEFAULT_NN_K: usize = 20;
pub const DEFAULT_CATEGORY_K: usize = 5;

/// `1 − cos(a, b)`, computed in `f64` and clamped to `[0, 2]`.
pub fn cosine_distance(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(DatasetError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(DatasetError::ZeroNorm);
    }
    if a == b {
        return Ok(0.0);
    }
    Ok((1.0 - dot / (na * nb).sqrt()).clamp(0.0, 2.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub image_id: String,
    pub distance: f64,
}

fn ranked<'a>(anchor: &ImageRecord, candidates: impl Iterator<Item = &'a ImageRecord>) -> Result<Vec<Neighbor>> {
    let mut out = candidates
        .filter(|r| r.image_id != anchor.image_id)
        .map(|r| {
            Ok(Neighbor {
                image_id: r.image_id.clone(),
                distance: cosine_distance(&anchor.feature, &r.feature)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.image_id.cmp(&b.image_id)));
    Ok(out)
}

/// The `k` records closest to `anchor`, excluding the anchor itself, by
/// ascending distance with ties broken by image id.
pub fn knn_query(anchor: &ImageRecord, corpus: &[ImageRecord], k: usize) -> Result<Vec<Neighbor>> {
    let mut all = ranked(anchor, corpus.iter())?;
    if all.len() < k {
        return Err(DatasetError::CorpusTooSmall {
            k,
            available: corpus.len(),
        });
    }
    all.truncate(k);
    Ok(all)
}

/// Object-name pairs that may appear together in a category-sampled set.
/// Lookups are symmetric and every name is compatible with itself.
#[derive(Debug, Clone, Default)]
pub struct CompatibilityTable {
    pairs: HashSet<(String, String)>,
}

fn norm(name: &str) -> String {
    name.trim().to_lowercase()
}

impl CompatibilityTable {
    pub fn from_pairs<A: AsRef<str>, B: AsRef<str>>(pairs: impl IntoIterator<Item = (A, B)>) -> Self {
        let mut t = Self::default();
        for (a, b) in pairs {
            let (a, b) = (norm(a.as_ref()), norm(b.as_ref()));
            t.pairs.insert((b.clone(), a.clone()));
            t.pairs.insert((a, b));
        }
        t
    }

    /// JSON list of `[name_a, name_b]` pairs.
    pub fn from_json(text: &str) -> Result<Self> {
        let pairs: Vec<(String, String)> =
            serde_json::from_str(text).map_err(|source| DatasetError::Json { line: 1, source })?;
        Ok(Self::from_pairs(pairs))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn compatible(&self, a: &str, b: &str) -> bool {
        let (a, b) = (norm(a), norm(b));
        a == b || self.pairs.contains(&(a, b))
    }

    pub fn records_compatible(&self, a: &ImageRecord, b: &ImageRecord) -> bool {
        a.object_names().any(|x| b.object_names().any(|y| self.compatible(x, y)))
    }

    pub fn len(&self) -> usize {
        self.pairs.iter().filter(|(a, b)| a <= b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// How the companions of an anchor image are chosen. `set_sizes` count the
/// anchor, so `[2, 3]` means one or two companions.
#[derive(Debug, Clone, Copy)]
pub enum Strategy<'a> {
    NearestNeighbor {
        k: usize,
        set_sizes: &'a [usize],
        sets_per_anchor: usize,
    },
    ObjectCategory {
        k: usize,
        set_sizes: &'a [usize],
        sets_per_anchor: usize,
        table: &'a CompatibilityTable,
    },
}

impl<'a> Strategy<'a> {
    pub fn nearest_neighbor() -> Self {
        Strategy::NearestNeighbor {
            k: DEFAULT_NN_K,
            set_sizes: &[2, 3],
            sets_per_anchor: 1,
        }
    }

    pub fn object_category(table: &'a CompatibilityTable) -> Self {
        Strategy::ObjectCategory {
            k: DEFAULT_CATEGORY_K,
            set_sizes: &[2, 3],
            sets_per_anchor: 1,
            table,
        }
    }

    fn parts(&self) -> (usize, &'a [usize], usize, SamplingStrategy) {
        match *self {
            Strategy::NearestNeighbor {
                k,
                set_sizes,
                sets_per_anchor,
            } => (k, set_sizes, sets_per_anchor, SamplingStrategy::NearestNeighbor),
            Strategy::ObjectCategory {
                k,
                set_sizes,
                sets_per_anchor,
                ..
            } => (k, set_sizes, sets_per_anchor, SamplingStrategy::ObjectCategory),
        }
    }

    fn validate(&self) -> Result<()> {
        let (k, sizes, _, _) = self.parts();
        if k == 0 {
            return Err(DatasetError::InvalidParameter("k must be positive".into()));
        }
        if sizes.is_empty() || sizes.iter().any(|s| !(2..=3).contains(s)) {
            return Err(DatasetError::InvalidParameter(format!(
                "set sizes {sizes:?} must be non-empty and within 2..=3"
            )));
        }
        Ok(())
    }
}

/// Draws image sets around `anchor`. Companions come from the anchor's `k`
/// nearest neighbours (category strategy: nearest among records sharing a
/// compatible object name) and are listed after the anchor in distance
/// order. A draw that needs more companions than there are candidates yields
/// no set.
pub fn sample_image_sets(
    anchor: &ImageRecord,
    corpus: &[ImageRecord],
    strategy: &Strategy,
    rng_seed: u64,
) -> Result<Vec<SampleSet>> {
    strategy.validate()?;
    let (k, sizes, sets, kind) = strategy.parts();
    let mut pool = match strategy {
        Strategy::NearestNeighbor { .. } => ranked(anchor, corpus.iter())?,
        Strategy::ObjectCategory { table, .. } => {
            ranked(anchor, corpus.iter().filter(|r| table.records_compatible(anchor, r)))?
        }
    };
    pool.truncate(k);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Vec::with_capacity(sets);
    for _ in 0..sets {
        let size = *sizes.choose(&mut rng).expect("validated non-empty");
        let n = size - 1;
        if pool.len() < n {
            continue;
        }
        let mut picked = rand::seq::index::sample(&mut rng, pool.len(), n).into_vec();
        picked.sort_unstable();
        let mut image_ids = vec![anchor.image_id.clone()];
        image_ids.extend(picked.into_iter().map(|i| pool[i].image_id.clone()));
        out.push(SampleSet {
            image_ids,
            strategy: kind,
            anchor_id: anchor.image_id.clone(),
        });
    }
    Ok(out)
}

fn anchor_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 step so neighbouring anchors get unrelated streams
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs [`sample_image_sets`] for every record as anchor, in corpus order.
/// Anchor `i` uses a seed derived from `(rng_seed, i)`, so the output does not
/// depend on the thread count.
pub fn sample_corpus(corpus: &Corpus, strategy: &Strategy, rng_seed: u64) -> Result<Vec<SampleSet>> {
    strategy.validate()?;
    let records = corpus.records();
    let per_anchor = records
        .par_iter()
        .enumerate()
        .map(|(i, r)| sample_image_sets(r, records, strategy, anchor_seed(rng_seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_anchor.into_iter().flatten().collect())
}
