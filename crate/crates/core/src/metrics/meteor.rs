//! Unigram-alignment METEOR with exact, Porter-stem and synonym stages.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use super::text::normalized_tokens;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeteorParams {
    /// Fmean = P·R / (alpha·P + (1 − alpha)·R); 0.9 gives 10PR / (R + 9P).
    pub alpha: f64,
    /// Fragmentation exponent.
    pub beta: f64,
    /// Fragmentation penalty scale.
    pub gamma: f64,
    pub stem: bool,
}

impl Default for MeteorParams {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            beta: 3.0,
            gamma: 0.5,
            stem: true,
        }
    }
}

/// Symmetric word-pair synonym table.
#[derive(Debug, Clone, Default)]
pub struct SynonymTable {
    pairs: HashSet<(String, String)>,
}

impl SynonymTable {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut t = Self::default();
        for (a, b) in pairs {
            let (a, b) = (a.to_lowercase(), b.to_lowercase());
            t.pairs.insert((b.clone(), a.clone()));
            t.pairs.insert((a, b));
        }
        t
    }

    /// One whitespace-separated pair per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let words: Vec<&str> = line.split_whitespace().collect();
            let [a, b] = words[..] else {
                return Err(format!("line {}: expected two words", i + 1));
            };
            pairs.push((a, b));
        }
        Ok(Self::from_pairs(pairs))
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn contains(&self, a: &str, b: &str) -> bool {
        self.pairs.contains(&(a.to_string(), b.to_string()))
    }

    pub fn len(&self) -> usize {
        self.pairs.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// (candidate position, reference position)
type Alignment = Vec<(usize, usize)>;

/// Pairs the k-th unmatched occurrence of each key in the candidate with the
/// k-th unmatched occurrence in the reference, which keeps same-key matches
/// non-crossing.
fn align_by_key(
    cand: &[String],
    refr: &[String],
    cand_used: &mut [bool],
    ref_used: &mut [bool],
    key: impl Fn(&str) -> String,
    out: &mut Alignment,
) {
    let mut ref_slots: HashMap<String, Vec<usize>> = HashMap::new();
    for (j, w) in refr.iter().enumerate() {
        if !ref_used[j] {
            ref_slots.entry(key(w)).or_default().push(j);
        }
    }
    let mut taken: HashMap<String, usize> = HashMap::new();
    for (i, w) in cand.iter().enumerate() {
        if cand_used[i] {
            continue;
        }
        let k = key(w);
        let Some(slots) = ref_slots.get(&k) else { continue };
        let next = taken.entry(k).or_insert(0);
        if let Some(&j) = slots.get(*next) {
            *next += 1;
            cand_used[i] = true;
            ref_used[j] = true;
            out.push((i, j));
        }
    }
}

fn stem(w: &str) -> String {
    porter_stemmer::stem(w)
}

fn align(cand: &[String], refr: &[String], params: &MeteorParams, synonyms: Option<&SynonymTable>) -> Alignment {
    let mut cand_used = vec![false; cand.len()];
    let mut ref_used = vec![false; refr.len()];
    let mut out = Vec::new();
    align_by_key(cand, refr, &mut cand_used, &mut ref_used, str::to_string, &mut out);
    if params.stem {
        align_by_key(cand, refr, &mut cand_used, &mut ref_used, stem, &mut out);
    }
    if let Some(syn) = synonyms {
        for (i, w) in cand.iter().enumerate() {
            if cand_used[i] {
                continue;
            }
            let hit = (0..refr.len()).find(|&j| !ref_used[j] && syn.contains(w, &refr[j]));
            if let Some(j) = hit {
                cand_used[i] = true;
                ref_used[j] = true;
                out.push((i, j));
            }
        }
    }
    out.sort_unstable();
    out
}

/// Number of maximal runs of matches contiguous in both sentences.
fn chunks(alignment: &Alignment) -> usize {
    if alignment.is_empty() {
        return 0;
    }
    1 + alignment
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count()
}

pub fn meteor_score(candidate: &str, reference: &str, params: &MeteorParams) -> f64 {
    meteor_score_with(candidate, reference, params, None)
}

pub fn meteor_score_with(
    candidate: &str,
    reference: &str,
    params: &MeteorParams,
    synonyms: Option<&SynonymTable>,
) -> f64 {
    let cand = normalized_tokens(candidate);
    let refr = normalized_tokens(reference);
    if cand.is_empty() || refr.is_empty() {
        log::warn!("METEOR on an empty sentence scores 0");
        return 0.0;
    }
    let alignment = align(&cand, &refr, params, synonyms);
    let matches = alignment.len();
    if matches == 0 {
        return 0.0;
    }
    let m = matches as f64;
    let precision = m / cand.len() as f64;
    let recall = m / refr.len() as f64;
    let fmean = precision * recall / (params.alpha * precision + (1.0 - params.alpha) * recall);
    let frag = chunks(&alignment) as f64 / m;
    let penalty = params.gamma * frag.powf(params.beta);
    fmean * (1.0 - penalty)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(c: &str, r: &str) -> f64 {
        meteor_score(c, r, &MeteorParams::default())
    }

    #[test]
    fn closed_forms() {
        assert_eq!(score("table", "table"), 0.5);
        let s = "the quick brown fox jumps over lazy dogs";
        assert_eq!(score(s, s), 0.9990234375);
        assert_eq!(score("red chair", "blue sofa"), 0.0);
    }

    #[test]
    fn empty_inputs_score_zero() {
        assert_eq!(score("", "table"), 0.0);
        assert_eq!(score("table", "  "), 0.0);
    }

    #[test]
    fn stem_stage() {
        assert_eq!(score("running", "run"), 0.5);
        let no_stem = MeteorParams {
            stem: false,
            ..MeteorParams::default()
        };
        assert_eq!(meteor_score("running", "run", &no_stem), 0.0);
    }

    #[test]
    fn synonym_stage() {
        let syn = SynonymTable::parse("# pairs\nsofa couch\n").unwrap();
        assert_eq!(syn.len(), 1);
        let p = MeteorParams::default();
        assert_eq!(meteor_score_with("couch", "sofa", &p, Some(&syn)), 0.5);
        assert_eq!(meteor_score_with("couch", "sofa", &p, None), 0.0);
        assert!(SynonymTable::parse("one two three").is_err());
    }

    #[test]
    fn partial_overlap_hand_value() {
        // cand "the cat sat" vs ref "the cat is here": matches the, cat (1 chunk)
        // P = 2/3, R = 2/4, Fmean = PR / (0.9P + 0.1R), penalty 0.5 * (1/2)^3
        let p = 2.0 / 3.0;
        let r = 0.5;
        let expected = p * r / (0.9 * p + 0.1 * r) * (1.0 - 0.5 * 0.125);
        assert!((score("the cat sat", "the cat is here") - expected).abs() < 1e-15);
    }

    #[test]
    fn repeated_words_align_in_order() {
        let s = "a b a b";
        // identical, single chunk of 4
        assert_eq!(score(s, s), 1.0 - 0.5 / 64.0);
        // swapped halves: two chunks
        let v = score("b a b a", "a b a b");
        assert!(v < score(s, s));
    }
}
