use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Corpus, QAPair};
use crate::markup::{find_identifiers, parse_identifier, resolve_references, EntityIdentifier};
use crate::metrics::text::normalized_tokens;

/// Filter rules in the order they are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FilterRule {
    /// Answer is little more than a list of identifiers.
    #[serde(rename = "a")]
    EnumerationOnly,
    /// Question or answer spells out bounding-box coordinates.
    #[serde(rename = "b")]
    BboxCoordinates,
    /// Some image of the set is never referred to.
    #[serde(rename = "c")]
    ImageCoverage,
    /// Fewer than two images contribute a target mask.
    #[serde(rename = "d")]
    MultiImageMasks,
    /// An identifier is malformed or has no matching annotation.
    #[serde(rename = "e")]
    UnresolvedReference,
    /// More targets than the mask cap allows.
    #[serde(rename = "mask-cap")]
    MaskCap,
}

impl FilterRule {
    pub const ALL: [FilterRule; 6] = [
        Self::EnumerationOnly,
        Self::BboxCoordinates,
        Self::ImageCoverage,
        Self::MultiImageMasks,
        Self::UnresolvedReference,
        Self::MaskCap,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Self::EnumerationOnly => "a",
            Self::BboxCoordinates => "b",
            Self::ImageCoverage => "c",
            Self::MultiImageMasks => "d",
            Self::UnresolvedReference => "e",
            Self::MaskCap => "mask-cap",
        }
    }
}

impl std::fmt::Display for FilterRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilterConfig {
    pub max_masks: usize,
    /// Answers with fewer words than this outside identifier tokens are
    /// treated as bare enumerations.
    pub min_clause_words: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            max_masks: 16,
            min_clause_words: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub total: usize,
    pub kept: usize,
    /// Every rule id is present, charged with the pairs it discarded first.
    pub discarded_by_rule: BTreeMap<FilterRule, usize>,
}

impl FilterReport {
    fn empty() -> Self {
        Self {
            total: 0,
            kept: 0,
            discarded_by_rule: FilterRule::ALL.iter().map(|&r| (r, 0)).collect(),
        }
    }

    pub fn discarded(&self) -> usize {
        self.discarded_by_rule.values().sum()
    }
}

static BBOX_PATTERN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[\s*\d+\s*,\s*\d+\s*,\s*\d+\s*,\s*\d+\s*\]").expect("bbox regex"));

static IMAGE_NUMBERS: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bimages?\s*(\d+(?:\s*(?:,|and|&)\s*\d+)*)\b").expect("image number regex")
});

static DIGITS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+").expect("digit regex"));

static IMAGE_ORDINAL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(first|second|third)\s+image\b").expect("ordinal regex"));

static ALL_IMAGES: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:both|all|each|every)\s+(?:of\s+the\s+)?(?:two\s+|three\s+)?images?\b").expect("all-images regex")
});

fn without_identifiers(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for (span, _) in find_identifiers(text) {
        out.push_str(&text[last..span.start]);
        out.push(' ');
        last = span.end;
    }
    out.push_str(&text[last..]);
    out
}

/// 1-based image indices mentioned in prose, e.g. "image 2", "the first
/// image", "IMAGE3". Mentions of both/all images cover `1..=num_images`.
fn textual_image_mentions(prose: &str, num_images: usize) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for cap in IMAGE_NUMBERS.captures_iter(prose) {
        for d in DIGITS.find_iter(&cap[1]) {
            if let Ok(n) = d.as_str().parse() {
                out.insert(n);
            }
        }
    }
    for cap in IMAGE_ORDINAL.captures_iter(prose) {
        out.insert(match cap[1].to_ascii_lowercase().as_str() {
            "first" => 1,
            "second" => 2,
            _ => 3,
        });
    }
    if ALL_IMAGES.is_match(prose) {
        out.extend(1..=num_images);
    }
    out
}

/// Checks one pair against every rule in order. On success returns the
/// distinct resolved targets, in order of first mention, as single-reference
/// identifiers.
pub fn check_pair(pair: &QAPair, corpus: &Corpus, config: &FilterConfig) -> Result<Vec<EntityIdentifier>, FilterRule> {
    let prose = without_identifiers(&pair.answer);
    if normalized_tokens(&prose).len() < config.min_clause_words {
        return Err(FilterRule::EnumerationOnly);
    }
    if BBOX_PATTERN.is_match(&pair.question) || BBOX_PATTERN.is_match(&pair.answer) {
        return Err(FilterRule::BboxCoordinates);
    }

    let num_images = pair.sample.image_ids.len();
    let mut parsed = Vec::new();
    let mut malformed = false;
    for (_, token) in find_identifiers(&pair.answer) {
        match parse_identifier(token) {
            Ok(id) => parsed.push(id),
            Err(_) => malformed = true,
        }
    }
    let grounded: BTreeSet<usize> = parsed.iter().flat_map(|id| id.refs()).map(|r| r.image_index as usize).collect();
    let mut referenced = grounded.clone();
    referenced.extend(textual_image_mentions(&prose, num_images));
    if !(1..=num_images).all(|j| referenced.contains(&j)) {
        return Err(FilterRule::ImageCoverage);
    }
    if grounded.len() < 2 {
        return Err(FilterRule::MultiImageMasks);
    }

    if malformed {
        return Err(FilterRule::UnresolvedReference);
    }
    let index = corpus
        .annotation_index(&pair.sample.image_ids)
        .map_err(|_| FilterRule::UnresolvedReference)?;
    let resolved = resolve_references(&pair.answer, &index).map_err(|_| FilterRule::UnresolvedReference)?;
    // repeated mentions of one entity share a mask
    let mut seen = BTreeSet::new();
    let targets: Vec<EntityIdentifier> = resolved
        .iter()
        .filter(|t| seen.insert(t.reference))
        .map(|t| t.identifier.with_ref(t.reference))
        .collect();
    if targets.len() > config.max_masks {
        return Err(FilterRule::MaskCap);
    }
    Ok(targets)
}

/// Keeps the pairs that pass every rule, in input order, with
/// `resolved_targets` filled in. Each discarded pair is charged to the first
/// rule it fails.
pub fn filter_qa(pairs: &[QAPair], corpus: &Corpus, config: &FilterConfig) -> (Vec<QAPair>, FilterReport) {
    let verdicts: Vec<_> = pairs.par_iter().map(|p| check_pair(p, corpus, config)).collect();
    let mut report = FilterReport::empty();
    report.total = pairs.len();
    let mut kept = Vec::new();
    for (pair, verdict) in pairs.iter().zip(verdicts) {
        match verdict {
            Ok(targets) => {
                let mut p = pair.clone();
                p.resolved_targets = targets;
                kept.push(p);
            }
            Err(rule) => *report.discarded_by_rule.entry(rule).or_default() += 1,
        }
    }
    report.kept = kept.len();
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::super::tests::record;
    use super::super::{QuestionCategory, SampleSet, SamplingStrategy};
    use super::*;

    fn corpus() -> Corpus {
        Corpus::new(vec![
            record("k1", &[1.0], &[("table", 1), ("chair", 2)]),
            record("k2", &[1.0], &[("table", 1), ("lamp", 2)]),
        ])
        .unwrap()
    }

    fn pair(answer: &str) -> QAPair {
        QAPair {
            question: "Which furniture can be used together?".into(),
            answer: answer.into(),
            category: QuestionCategory::Functional,
            resolved_targets: Vec::new(),
            sample: SampleSet {
                image_ids: vec!["k1".into(), "k2".into()],
                strategy: SamplingStrategy::NearestNeighbor,
                anchor_id: "k1".into(),
            },
        }
    }

    #[test]
    fn kept_pair_gets_targets() {
        let p = pair("The table_101 and chair_102 match the lamp_202 nicely.");
        let targets = check_pair(&p, &corpus(), &FilterConfig::default()).unwrap();
        let tokens: Vec<_> = targets.iter().map(|t| t.token()).collect();
        assert_eq!(tokens, ["table_101", "chair_102", "lamp_202"]);
    }

    #[test]
    fn single_image_answer_is_rule_d() {
        let p = pair("Only the table_101 matters here while the second image has nothing.");
        assert_eq!(check_pair(&p, &corpus(), &FilterConfig::default()), Err(FilterRule::MultiImageMasks));
        let p = pair("Only the table_101 and chair_102 matter for this.");
        assert_eq!(check_pair(&p, &corpus(), &FilterConfig::default()), Err(FilterRule::ImageCoverage));
    }

    #[test]
    fn mask_cap() {
        let p = pair("The table_101_201 pair is the same model in both.");
        let tight = FilterConfig {
            max_masks: 1,
            ..FilterConfig::default()
        };
        assert_eq!(check_pair(&p, &corpus(), &tight), Err(FilterRule::MaskCap));
        assert!(check_pair(&p, &corpus(), &FilterConfig::default()).is_ok());
    }

    #[test]
    fn mentions() {
        let m = textual_image_mentions("see IMAGE1, images 2 and 3, the first image", 3);
        assert_eq!(m.into_iter().collect::<Vec<_>>(), [1, 2, 3]);
        assert_eq!(textual_image_mentions("in both images", 2).len(), 2);
        assert!(textual_image_mentions("imagery", 2).is_empty());
    }

    #[test]
    fn report_conservation() {
        let pairs = vec![
            pair("table_101 chair_102 lamp_202"),
            pair("The table_101 and lamp_202 go well together."),
            pair("The table_101 at [1, 2, 3, 4] and lamp_202 go together."),
        ];
        let (kept, report) = filter_qa(&pairs, &corpus(), &FilterConfig::default());
        assert_eq!(kept.len(), 1);
        assert_eq!(report.kept + report.discarded(), report.total);
        assert_eq!(report.discarded_by_rule[&FilterRule::EnumerationOnly], 1);
        assert_eq!(report.discarded_by_rule[&FilterRule::BboxCoordinates], 1);
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"mask-cap\":0"));
        let (again, r2) = filter_qa(&kept, &corpus(), &FilterConfig::default());
        assert_eq!(again, kept);
        assert_eq!(r2.discarded(), 0);
    }
}
