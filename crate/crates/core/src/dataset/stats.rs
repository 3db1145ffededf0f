use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Corpus, QAPair};
use crate::markup::{find_identifiers, parse_identifier, EntityIdentifier};

/// Pair counts along each axis of the dataset breakdown.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelDistribution {
    /// Pairs per annotation source; a pair counts once for each distinct
    /// source among its images. Empty without a corpus.
    pub annotation_source: BTreeMap<String, usize>,
    pub question_type: BTreeMap<String, usize>,
    /// Pairs per number of distinct object names targeted.
    pub unique_objects: BTreeMap<usize, usize>,
    /// Pairs per number of distinct part names targeted.
    pub unique_parts: BTreeMap<usize, usize>,
    /// Pairs per number of target masks.
    pub target_masks: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_pairs: usize,
    pub total_targets: usize,
    pub mean_targets: f64,
    pub max_targets: usize,
    pub unique_object_names: usize,
    pub unique_part_names: usize,
    pub category_histogram: BTreeMap<String, usize>,
    pub levels: LevelDistribution,
}

/// Targets of a pair: `resolved_targets` when filled in, otherwise every
/// distinct reference of the well-formed identifiers in the answer.
fn targets(pair: &QAPair) -> Vec<EntityIdentifier> {
    if !pair.resolved_targets.is_empty() {
        return pair.resolved_targets.clone();
    }
    let mut seen = BTreeSet::new();
    find_identifiers(&pair.answer)
        .into_iter()
        .filter_map(|(_, t)| parse_identifier(t).ok())
        .flat_map(|id| id.refs().map(|r| id.with_ref(r)).collect::<Vec<_>>())
        .filter(|id| seen.insert(id.primary()))
        .collect()
}

/// Returns `None` for an empty pair list.
pub fn dataset_stats(pairs: &[QAPair], corpus: Option<&Corpus>) -> Option<DatasetStats> {
    if pairs.is_empty() {
        return None;
    }
    let mut levels = LevelDistribution::default();
    let mut objects = BTreeSet::new();
    let mut parts = BTreeSet::new();
    let mut total = 0;
    let mut max = 0;
    for pair in pairs {
        let t = targets(pair);
        total += t.len();
        max = max.max(t.len());
        *levels.target_masks.entry(t.len()).or_default() += 1;
        *levels.question_type.entry(pair.category.as_str().to_string()).or_default() += 1;
        let pair_objects: BTreeSet<&str> = t.iter().filter(|i| i.part_id.is_none()).map(|i| i.name.as_str()).collect();
        let pair_parts: BTreeSet<&str> = t.iter().filter(|i| i.part_id.is_some()).map(|i| i.name.as_str()).collect();
        *levels.unique_objects.entry(pair_objects.len()).or_default() += 1;
        *levels.unique_parts.entry(pair_parts.len()).or_default() += 1;
        objects.extend(pair_objects.into_iter().map(str::to_string));
        parts.extend(pair_parts.into_iter().map(str::to_string));
        if let Some(c) = corpus {
            let sources: BTreeSet<String> = pair
                .sample
                .image_ids
                .iter()
                .map(|id| {
                    c.get(id)
                        .and_then(|r| r.source.clone())
                        .unwrap_or_else(|| "unknown".to_string())
                })
                .collect();
            for s in sources {
                *levels.annotation_source.entry(s).or_default() += 1;
            }
        }
    }
    Some(DatasetStats {
        num_pairs: pairs.len(),
        total_targets: total,
        mean_targets: total as f64 / pairs.len() as f64,
        max_targets: max,
        unique_object_names: objects.len(),
        unique_part_names: parts.len(),
        category_histogram: levels.question_type.clone(),
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{QuestionCategory, SampleSet, SamplingStrategy};
    use super::*;

    fn pair(answer: &str, category: QuestionCategory) -> QAPair {
        QAPair {
            question: "q".into(),
            answer: answer.into(),
            category,
            resolved_targets: Vec::new(),
            sample: SampleSet {
                image_ids: vec!["a".into(), "b".into()],
                strategy: SamplingStrategy::NearestNeighbor,
                anchor_id: "a".into(),
            },
        }
    }

    #[test]
    fn mean_and_max() {
        let pairs = [
            pair("cup_101 cup_201 lid_10101", QuestionCategory::Spatial),
            pair("cup_101_201 pot_102 pot_202", QuestionCategory::Numerical),
        ];
        let s = dataset_stats(&pairs, None).unwrap();
        assert_eq!(s.mean_targets, 3.5);
        assert_eq!(s.max_targets, 4);
        assert_eq!(s.unique_object_names, 2);
        assert_eq!(s.unique_part_names, 1);
        assert_eq!(s.category_histogram["spatial"], 1);
        assert_eq!(s.levels.target_masks[&3], 1);
        assert_eq!(s.levels.target_masks[&4], 1);
        assert!(s.levels.annotation_source.is_empty());
    }

    #[test]
    fn single_pair_and_empty() {
        let s = dataset_stats(&[pair("a_101 b_201", QuestionCategory::OpenEnded)], None).unwrap();
        assert_eq!(s.mean_targets, 2.0);
        assert_eq!(s.max_targets, 2);
        assert!(dataset_stats(&[], None).is_none());
    }
}
