use std::ops::Range;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const OPEN: &str = "<p>";
const CLOSE: &str = "</p>";
const SEG: &str = "[SEG]";
const IMAGE_TAG: &str = "(IMAGE";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkupErrorKind {
    ZeroImages,
    UnclosedPhrase,
    UnmatchedClose,
    NestedPhrase,
    EmptyPhrase,
    /// `</p>` not followed by `[SEG]`.
    MissingSegToken,
    /// `[SEG]` not followed by a well-formed `(IMAGEk)`.
    MissingImageTag,
    /// `[SEG]` outside a grounded construct.
    OrphanSegToken,
    ImageIndexZero,
    ImageIndexOutOfRange { index: u32, num_images: u32 },
    ImageIndexOverflow,
    NoPhrases,
    /// Builder input that contains reserved tokens.
    ReservedToken,
}

impl std::fmt::Display for MarkupErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::ZeroImages => write!(f, "response must reference at least one image"),
            Self::UnclosedPhrase => write!(f, "<p> without matching </p>"),
            Self::UnmatchedClose => write!(f, "</p> without matching <p>"),
            Self::NestedPhrase => write!(f, "<p> nested inside <p>"),
            Self::EmptyPhrase => write!(f, "empty grounded phrase"),
            Self::MissingSegToken => write!(f, "</p> not followed by [SEG]"),
            Self::MissingImageTag => write!(f, "[SEG] without an (IMAGEk) tag"),
            Self::OrphanSegToken => write!(f, "[SEG] outside a grounded phrase"),
            Self::ImageIndexZero => write!(f, "image index 0 (images are 1-based)"),
            Self::ImageIndexOutOfRange { index, num_images } => {
                write!(f, "image index {index} exceeds the {num_images} input images")
            }
            Self::ImageIndexOverflow => write!(f, "image index does not fit in 32 bits"),
            Self::NoPhrases => write!(f, "no grounded phrase in response"),
            Self::ReservedToken => write!(f, "text contains a reserved markup token"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at byte {offset}")]
pub struct MarkupError {
    pub kind: MarkupErrorKind,
    pub offset: usize,
}

impl MarkupError {
    fn at(kind: MarkupErrorKind, offset: usize) -> Self {
        Self { kind, offset }
    }
}

/// One `<p>…</p> [SEG] (IMAGEk)` occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundedPhrase {
    pub text: String,
    /// 1-based image the phrase is grounded in.
    pub image_index: u32,
    /// 1-based position among the phrases of the same image.
    pub within_image_order: u32,
    /// Byte span of `text` inside the raw response.
    pub char_span: Range<usize>,
    /// Byte span of the whole grounded construct.
    pub markup_span: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundedResponse {
    raw_text: String,
    num_images: u32,
    phrases: Vec<GroundedPhrase>,
}

/// Builder input for [`GroundedResponse::build`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Prose(String),
    Grounded { text: String, image_index: u32 },
}

fn contains_reserved(s: &str) -> bool {
    s.contains(OPEN) || s.contains(CLOSE) || s.contains(SEG)
}

impl GroundedResponse {
    /// Assembles a canonical response from prose and grounded segments.
    pub fn build(num_images: u32, segments: &[Segment]) -> Result<Self, MarkupError> {
        if num_images == 0 {
            return Err(MarkupError::at(MarkupErrorKind::ZeroImages, 0));
        }
        let mut raw = String::new();
        let mut phrases = Vec::new();
        let mut orders = OrderCounter::default();
        for seg in segments {
            match seg {
                Segment::Prose(p) => {
                    if contains_reserved(p) {
                        return Err(MarkupError::at(MarkupErrorKind::ReservedToken, raw.len()));
                    }
                    raw.push_str(p);
                }
                Segment::Grounded { text, image_index } => {
                    if contains_reserved(text) {
                        return Err(MarkupError::at(MarkupErrorKind::ReservedToken, raw.len()));
                    }
                    if text.trim().is_empty() {
                        return Err(MarkupError::at(MarkupErrorKind::EmptyPhrase, raw.len()));
                    }
                    check_index(*image_index, num_images, true, raw.len())?;
                    let start = raw.len();
                    let span = write_grounded(&mut raw, text, *image_index);
                    phrases.push(GroundedPhrase {
                        text: text.clone(),
                        image_index: *image_index,
                        within_image_order: orders.next(*image_index),
                        char_span: span,
                        markup_span: start..raw.len(),
                    });
                }
            }
        }
        let built = Self {
            raw_text: raw,
            num_images,
            phrases,
        };
        // adjacent prose segments can still form a reserved token
        match parse_response(&built.raw_text, num_images, false) {
            Ok(r) if r.phrases == built.phrases => Ok(built),
            Ok(_) => Err(MarkupError::at(MarkupErrorKind::ReservedToken, 0)),
            Err(e) => Err(MarkupError::at(MarkupErrorKind::ReservedToken, e.offset)),
        }
    }

    pub fn raw_text(&self) -> &str {
        &self.raw_text
    }

    pub fn num_images(&self) -> u32 {
        self.num_images
    }

    pub fn phrases(&self) -> &[GroundedPhrase] {
        &self.phrases
    }

    /// Phrases grounded in image `j` (1-based), in order of appearance.
    pub fn phrases_for_image(&self, j: u32) -> impl Iterator<Item = &GroundedPhrase> {
        self.phrases.iter().filter(move |p| p.image_index == j)
    }

    /// `G_j` for each image `j = 1..=num_images`.
    pub fn counts_per_image(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_images as usize];
        for p in &self.phrases {
            if let Some(c) = counts.get_mut(p.image_index as usize - 1) {
                *c += 1;
            }
        }
        counts
    }

    /// The response with all markup removed; phrase text is kept inline.
    pub fn plain_text(&self) -> String {
        let mut out = String::with_capacity(self.raw_text.len());
        let mut pos = 0;
        for p in &self.phrases {
            out.push_str(&self.raw_text[pos..p.markup_span.start]);
            out.push_str(&p.text);
            pos = p.markup_span.end;
        }
        out.push_str(&self.raw_text[pos..]);
        out
    }
}

#[derive(Default)]
struct OrderCounter(Vec<u32>);

impl OrderCounter {
    fn next(&mut self, image: u32) -> u32 {
        let i = image as usize;
        if self.0.len() <= i {
            self.0.resize(i + 1, 0);
        }
        self.0[i] += 1;
        self.0[i]
    }
}

fn write_grounded(out: &mut String, text: &str, image_index: u32) -> Range<usize> {
    out.push_str(OPEN);
    let start = out.len();
    out.push_str(text);
    let end = out.len();
    out.push_str(CLOSE);
    out.push(' ');
    out.push_str(SEG);
    out.push(' ');
    out.push_str(IMAGE_TAG);
    out.push_str(&image_index.to_string());
    out.push(')');
    start..end
}

fn check_index(index: u32, num_images: u32, strict: bool, offset: usize) -> Result<(), MarkupError> {
    if index == 0 {
        return Err(MarkupError::at(MarkupErrorKind::ImageIndexZero, offset));
    }
    if strict && index > num_images {
        return Err(MarkupError::at(
            MarkupErrorKind::ImageIndexOutOfRange { index, num_images },
            offset,
        ));
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Token {
    Open,
    Close,
    Seg,
}

/// Earliest reserved token at or after `from`.
fn next_token(text: &str, from: usize) -> Option<(Token, usize)> {
    let rest = &text[from..];
    [(Token::Open, OPEN), (Token::Close, CLOSE), (Token::Seg, SEG)]
        .into_iter()
        .filter_map(|(t, s)| rest.find(s).map(|i| (t, from + i)))
        .min_by_key(|&(_, i)| i)
}

fn skip_ws(text: &str, mut pos: usize) -> usize {
    for c in text[pos..].chars() {
        if !c.is_whitespace() {
            break;
        }
        pos += c.len_utf8();
    }
    pos
}

/// Parses grounded markup. Non-strict mode tolerates responses without any
/// phrase and image indices above `num_images`.
pub fn parse_response(text: &str, num_images: u32, strict: bool) -> Result<GroundedResponse, MarkupError> {
    use MarkupErrorKind::*;
    if num_images == 0 {
        return Err(MarkupError::at(ZeroImages, 0));
    }
    let mut phrases = Vec::new();
    let mut orders = OrderCounter::default();
    let mut pos = 0;
    while let Some((tok, at)) = next_token(text, pos) {
        match tok {
            Token::Close => return Err(MarkupError::at(UnmatchedClose, at)),
            Token::Seg => return Err(MarkupError::at(OrphanSegToken, at)),
            Token::Open => {}
        }
        let content_start = at + OPEN.len();
        let close = match next_token(text, content_start) {
            Some((Token::Close, c)) => c,
            Some((Token::Open, o)) => return Err(MarkupError::at(NestedPhrase, o)),
            Some((Token::Seg, s)) => return Err(MarkupError::at(OrphanSegToken, s)),
            None => return Err(MarkupError::at(UnclosedPhrase, at)),
        };
        let phrase = &text[content_start..close];
        if phrase.trim().is_empty() {
            return Err(MarkupError::at(EmptyPhrase, content_start));
        }
        let after_close = skip_ws(text, close + CLOSE.len());
        if !text[after_close..].starts_with(SEG) {
            return Err(MarkupError::at(MissingSegToken, after_close));
        }
        let seg_at = after_close;
        let tag = skip_ws(text, seg_at + SEG.len());
        if !text[tag..].starts_with(IMAGE_TAG) {
            return Err(MarkupError::at(MissingImageTag, seg_at));
        }
        let digits_start = tag + IMAGE_TAG.len();
        let digits_len = text[digits_start..].bytes().take_while(u8::is_ascii_digit).count();
        let digits_end = digits_start + digits_len;
        if digits_len == 0 || !text[digits_end..].starts_with(')') {
            return Err(MarkupError::at(MissingImageTag, seg_at));
        }
        let index: u32 = text[digits_start..digits_end]
            .parse()
            .map_err(|_| MarkupError::at(ImageIndexOverflow, digits_start))?;
        check_index(index, num_images, strict, digits_start)?;
        let end = digits_end + 1;
        phrases.push(GroundedPhrase {
            text: phrase.to_string(),
            image_index: index,
            within_image_order: orders.next(index),
            char_span: content_start..close,
            markup_span: at..end,
        });
        pos = end;
    }
    if strict && phrases.is_empty() {
        return Err(MarkupError::at(NoPhrases, 0));
    }
    Ok(GroundedResponse {
        raw_text: text.to_string(),
        num_images,
        phrases,
    })
}

/// Re-emits the response with every grounded construct in canonical form
/// (`<p>text</p> [SEG] (IMAGEk)`), keeping the prose between constructs.
pub fn serialize_response(r: &GroundedResponse) -> String {
    let mut out = String::with_capacity(r.raw_text.len());
    let mut pos = 0;
    for p in &r.phrases {
        out.push_str(&r.raw_text[pos..p.markup_span.start]);
        write_grounded(&mut out, &p.text, p.image_index);
        pos = p.markup_span.end;
    }
    out.push_str(&r.raw_text[pos..]);
    out
}

static LOOSE_MARKUP: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"</?p>|\[SEG\](?:\s*\(IMAGE\d+\))?").expect("static regex"));

/// Removes grounding tokens from arbitrary text without validating it.
pub fn strip_markup(text: &str) -> String {
    LOOSE_MARKUP.replace_all(text, "").into_owned()
}
