//! Documents as token sequences aligned to their source words.

mod document;
mod pos;
mod vocab;

pub use document::{tokenize, Document};
pub use pos::{
    attach_pos_tags, classify_pos, fallback_tag, lookup_penn, read_tag_file, tag_with_fallback,
    PosClass, TagReport, TaggedWord,
};
pub use vocab::Vocabulary;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("character {ch:?} in word {word:?} is not covered by the vocabulary")]
    UncoveredChar { word: String, ch: char },
    #[error("duplicate vocabulary entry {0:?}")]
    DuplicateEntry(String),
    #[error("vocabulary entries must be non-empty and free of whitespace (line {line})")]
    InvalidEntry { line: usize },
    #[error("tag alignment failed at word {index}: {detail}")]
    TagAlignment { index: usize, detail: String },
    #[error("malformed tag file line {line}: {detail}")]
    TagFormat { line: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
