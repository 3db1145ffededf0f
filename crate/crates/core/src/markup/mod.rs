//! Grounded-response markup and entity identifier grammars.
//!
//! A grounded response interleaves free prose with grounded phrases:
//!
//! ```text
//! response := (prose | grounded)*
//! grounded := "<p>" phrase "</p>" ws "[SEG]" ws "(IMAGE" int ")"
//! ```
//!
//! Entity identifiers name annotated objects and parts inside question and
//! answer text: `table_101` is object 01 of image 1, `drawer_10101` is part
//! 01 of that object, and `rocket_101_202` refers to one entity seen in two
//! images.

mod identifier;
mod response;

pub use identifier::{
    find_identifiers, parse_identifier, resolve_references, Annotation, AnnotationIndex, EntityIdentifier, EntityRef,
    IdentifierError, ReferenceError, ResolvedTarget,
};
pub use response::{
    parse_response, serialize_response, strip_markup, GroundedPhrase, GroundedResponse, MarkupError, MarkupErrorKind,
    Segment,
};
