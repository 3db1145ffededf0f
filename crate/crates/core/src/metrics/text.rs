use std::collections::BTreeSet;

/// Lowercased, punctuation-stripped, whitespace-separated tokens.
pub fn normalized_tokens(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// Word-overlap IoU of two phrases over their token sets.
///
/// Two phrases without tokens score 1.
pub fn token_set_iou(a: &str, b: &str) -> f64 {
    let sa: BTreeSet<String> = normalized_tokens(a).into_iter().collect();
    let sb: BTreeSet<String> = normalized_tokens(b).into_iter().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}
