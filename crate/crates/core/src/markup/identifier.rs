use std::collections::HashMap;
use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdentifierError {
    #[error("identifier `{0}` has an empty name")]
    EmptyName(String),
    #[error("identifier `{0}` has no digit group")]
    NoDigitGroups(String),
    #[error("identifier `{token}`: digit group `{group}` must have 3 or 5 digits")]
    MalformedGroup { token: String, group: String },
    #[error("identifier `{token}`: name segment `{segment}` is not allowed")]
    InvalidName { token: String, segment: String },
    #[error("identifier `{token}`: image index 0 in group `{group}`")]
    ImageIndexZero { token: String, group: String },
}

/// One (image, object[, part]) reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityRef {
    pub image_index: u8,
    pub object_id: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part_id: Option<u8>,
}

impl EntityRef {
    fn digits(&self) -> String {
        match self.part_id {
            Some(p) => format!("{}{:02}{:02}", self.image_index, self.object_id, p),
            None => format!("{}{:02}", self.image_index, self.object_id),
        }
    }

    pub fn is_part(&self) -> bool {
        self.part_id.is_some()
    }
}

/// A decoded `name_XYY[ZZ](_XYY[ZZ])*` token.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntityIdentifier {
    pub name: String,
    pub image_index: u8,
    pub object_id: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part_id: Option<u8>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra_refs: Vec<EntityRef>,
}

impl EntityIdentifier {
    pub fn primary(&self) -> EntityRef {
        EntityRef {
            image_index: self.image_index,
            object_id: self.object_id,
            part_id: self.part_id,
        }
    }

    /// Primary reference followed by the extra ones.
    pub fn refs(&self) -> impl Iterator<Item = EntityRef> + '_ {
        std::iter::once(self.primary()).chain(self.extra_refs.iter().copied())
    }

    /// Single-reference identifier for one of this identifier's refs.
    pub fn with_ref(&self, r: EntityRef) -> EntityIdentifier {
        EntityIdentifier {
            name: self.name.clone(),
            image_index: r.image_index,
            object_id: r.object_id,
            part_id: r.part_id,
            extra_refs: Vec::new(),
        }
    }

    /// Canonical token form, e.g. `rocket_101_202`.
    pub fn token(&self) -> String {
        let mut s = self.name.clone();
        for r in self.refs() {
            s.push('_');
            s.push_str(&r.digits());
        }
        s
    }
}

impl std::fmt::Display for EntityIdentifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.token())
    }
}

fn valid_name_segment(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
        && s.chars().any(|c| !c.is_ascii_digit())
}

pub fn parse_identifier(token: &str) -> Result<EntityIdentifier, IdentifierError> {
    let lowered = token.to_ascii_lowercase();
    let segments: Vec<&str> = lowered.split('_').collect();
    let first_group = segments
        .iter()
        .position(|s| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit()));
    let Some(first_group) = first_group else {
        return Err(IdentifierError::NoDigitGroups(token.to_string()));
    };
    let (name_segs, groups) = segments.split_at(first_group);
    if name_segs.is_empty() || name_segs.iter().all(|s| s.is_empty()) {
        return Err(IdentifierError::EmptyName(token.to_string()));
    }
    if let Some(bad) = name_segs.iter().find(|s| !valid_name_segment(s)) {
        return Err(IdentifierError::InvalidName {
            token: token.to_string(),
            segment: bad.to_string(),
        });
    }
    let mut refs = Vec::with_capacity(groups.len());
    for g in groups {
        if !g.bytes().all(|b| b.is_ascii_digit()) || !(g.len() == 3 || g.len() == 5) {
            return Err(IdentifierError::MalformedGroup {
                token: token.to_string(),
                group: g.to_string(),
            });
        }
        let d = g.as_bytes();
        let num = |i: usize| (d[i] - b'0') * 10 + (d[i + 1] - b'0');
        let image_index = d[0] - b'0';
        if image_index == 0 {
            return Err(IdentifierError::ImageIndexZero {
                token: token.to_string(),
                group: g.to_string(),
            });
        }
        refs.push(EntityRef {
            image_index,
            object_id: num(1),
            part_id: (g.len() == 5).then(|| num(3)),
        });
    }
    let primary = refs[0];
    Ok(EntityIdentifier {
        name: name_segs.join("_"),
        image_index: primary.image_index,
        object_id: primary.object_id,
        part_id: primary.part_id,
        extra_refs: refs[1..].to_vec(),
    })
}

static IDENTIFIER_TOKEN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b[A-Za-z][A-Za-z0-9-]*(?:_[A-Za-z0-9-]+)*_[0-9]+\b").expect("static regex")
});

/// Byte spans and text of every identifier-shaped token in `text`.
///
/// Tokens are located by shape only; they may still fail [`parse_identifier`].
pub fn find_identifiers(text: &str) -> Vec<(Range<usize>, &str)> {
    IDENTIFIER_TOKEN
        .find_iter(text)
        .map(|m| (m.range(), m.as_str()))
        .collect()
}

/// An annotated object or part that identifiers can point at.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_ref: Option<String>,
}

/// Annotations keyed by (image, object, part) within one image set.
#[derive(Debug, Clone, Default)]
pub struct AnnotationIndex {
    entries: HashMap<EntityRef, Annotation>,
}

impl AnnotationIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: EntityRef, annotation: Annotation) -> Option<Annotation> {
        self.entries.insert(key, annotation)
    }

    pub fn get(&self, key: &EntityRef) -> Option<&Annotation> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Lowercase alphanumerics only, so `chest of drawers` and `chest_of_drawers`
/// compare equal.
fn normalize_name(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReferenceError {
    #[error("malformed identifier: {0}")]
    Malformed(#[from] IdentifierError),
    #[error("unresolved reference `{token}`: no annotation for image {image}, object {object:02}{part}")]
    Missing {
        token: String,
        image: u8,
        object: u8,
        part: String,
    },
    #[error("unresolved reference `{token}`: annotation is named `{annotated}`")]
    NameMismatch { token: String, annotated: String },
}

impl ReferenceError {
    pub fn token(&self) -> &str {
        match self {
            Self::Malformed(
                IdentifierError::EmptyName(t)
                | IdentifierError::NoDigitGroups(t)
                | IdentifierError::MalformedGroup { token: t, .. }
                | IdentifierError::InvalidName { token: t, .. }
                | IdentifierError::ImageIndexZero { token: t, .. },
            ) => t,
            Self::Missing { token, .. } | Self::NameMismatch { token, .. } => token,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedTarget {
    /// The identifier as written, possibly with several refs.
    pub identifier: EntityIdentifier,
    pub reference: EntityRef,
    pub annotation: Annotation,
}

/// Maps every identifier token of `answer` to its annotation, in order of
/// appearance. Multi-image identifiers yield one target per reference.
pub fn resolve_references(answer: &str, annotations: &AnnotationIndex) -> Result<Vec<ResolvedTarget>, ReferenceError> {
    let mut out = Vec::new();
    for (_, token) in find_identifiers(answer) {
        let ident = parse_identifier(token)?;
        for r in ident.refs() {
            let Some(ann) = annotations.get(&r) else {
                return Err(ReferenceError::Missing {
                    token: token.to_string(),
                    image: r.image_index,
                    object: r.object_id,
                    part: r.part_id.map(|p| format!(", part {p:02}")).unwrap_or_default(),
                });
            };
            if normalize_name(&ann.name) != normalize_name(&ident.name) {
                return Err(ReferenceError::NameMismatch {
                    token: token.to_string(),
                    annotated: ann.name.clone(),
                });
            }
            out.push(ResolvedTarget {
                identifier: ident.clone(),
                reference: r,
                annotation: ann.clone(),
            });
        }
    }
    Ok(out)
}
