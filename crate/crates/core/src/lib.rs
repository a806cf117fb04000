//! Token-level diagnostics for long-context language modeling.
//!
//! The crate measures how each token's predicted probability moves when the
//! context window grows from `K` to `2K` tokens and attributes the movement
//! to part of speech, subword position, N-gram recurrence, token frequency
//! priors and model confidence.
//!
//! Layout:
//! - [`corpus`]: vocabulary, greedy subword tokenizer, POS classes.
//! - [`provider`]: the log-probability contract, a cache-augmented n-gram
//!   model and a reader for pre-extracted records.
//! - [`sweep`]: stride-chunked sliding-window evaluation.
//! - [`annotate`]: N-gram recurrence counts, subword partition, frequencies.
//! - [`analytics`]: the measurements and rank correlations.
//! - [`report`]: run configuration and the train / sweep / analyze commands.
//! - [`synth`]: seeded synthetic corpora with recurring motifs.

pub mod analytics;
pub mod annotate;
pub mod corpus;
pub mod provider;
pub mod report;
pub mod sweep;
pub mod synth;

/// Integer id of a vocabulary entry.
pub type TokenId = u32;
