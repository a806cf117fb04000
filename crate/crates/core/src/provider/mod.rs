//! The log-probability contract and its two implementations.
//!
//! A provider answers one question: given the context window a token was
//! scored from, what probability did the model put on the true token, and
//! how sharp was the distribution? [`CacheNGramLM`] computes it; a
//! [`RecordStore`] replays records extracted elsewhere.

mod ngram;
mod store;

pub use ngram::{CacheNGramLM, LmParams};
pub use store::{
    read_records, write_records, InterchangeHeader, RecordStore, SCHEMA_VERSION,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::TokenId;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("training corpus contains no tokens")]
    EmptyCorpus,
    #[error("token id {id} outside vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: TokenId, vocab_size: usize },
    #[error("no record for doc {doc_id:?}, K={k}, token {token_index}")]
    NotFound {
        doc_id: String,
        k: usize,
        token_index: usize,
    },
    #[error(
        "record for doc {doc_id:?}, K={k}, token {token_index} was scored from \
         {stored} context tokens, the sweep supplies {expected}; check the stride"
    )]
    ContextMismatch {
        doc_id: String,
        k: usize,
        token_index: usize,
        stored: usize,
        expected: usize,
    },
    #[error("duplicate record for doc {doc_id:?}, K={k}, token {token_index}")]
    DuplicateKey {
        doc_id: String,
        k: usize,
        token_index: usize,
    },
    #[error("{path}:{line}: {detail}")]
    Invalid {
        path: String,
        line: usize,
        detail: String,
    },
    #[error("vocabulary fingerprint mismatch: model {model}, vocabulary {vocab}")]
    VocabMismatch { model: String, vocab: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One token's prediction at one context-length tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub doc_id: String,
    /// Context-length tier `K` the record was produced under.
    pub k: usize,
    pub token_index: usize,
    /// Number of context tokens actually supplied.
    pub context_len: usize,
    /// Natural-log probability of the true token.
    pub log_prob: f64,
    /// Entropy of the predictive distribution, in nats.
    pub entropy: f64,
    pub max_prob: f64,
    pub argmax_id: TokenId,
    pub correct: bool,
}

impl PredictionRecord {
    /// Token-perplexity, `-log p`.
    pub fn nll(&self) -> f64 {
        -self.log_prob
    }
}

/// The four summaries kept from a full predictive distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub log_prob: f64,
    pub entropy: f64,
    pub max_prob: f64,
    pub argmax_id: TokenId,
    pub correct: bool,
}

/// Summarizes a normalized distribution with respect to `target`.
/// Ties for the maximum go to the lowest id.
pub fn summarize(probs: &[f64], target: TokenId) -> Summary {
    let mut entropy = 0.0;
    let mut max_prob = f64::NEG_INFINITY;
    let mut argmax = 0usize;
    for (w, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            entropy -= p * p.ln();
        }
        if p > max_prob {
            max_prob = p;
            argmax = w;
        }
    }
    Summary {
        log_prob: probs[target as usize].ln(),
        entropy: entropy.max(0.0),
        max_prob,
        argmax_id: argmax as TokenId,
        correct: argmax == target as usize,
    }
}

/// Everything a provider may need to score one token.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub doc_id: &'a str,
    pub k: usize,
    pub token_index: usize,
    /// Tokens preceding the target inside its evaluation window.
    pub context: &'a [TokenId],
    pub target: TokenId,
}

/// Reentrant scorer shared across worker threads.
pub trait LogProbProvider: Sync {
    fn score(&self, query: &Query<'_>) -> Result<PredictionRecord, ProviderError>;

    fn vocab_size(&self) -> usize;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_distribution_summary() {
        let probs = vec![0.01; 100];
        let s = summarize(&probs, 42);
        assert!((s.entropy - 100f64.ln()).abs() <= 1e-12);
        assert!((s.max_prob - 0.01).abs() <= 1e-15);
        assert_eq!(s.argmax_id, 0);
        assert!(!s.correct);
        assert!(summarize(&probs, 0).correct);
    }

    #[test]
    fn one_hot_limit() {
        let mut probs = vec![1e-300; 10];
        probs[3] = 1.0 - 9e-300;
        let s = summarize(&probs, 3);
        assert!(s.correct);
        assert!(s.entropy < 1e-290);
        assert_eq!(s.max_prob, probs[3]);
        assert_eq!(s.log_prob, probs[3].ln());
    }
}
