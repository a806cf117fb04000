use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{summarize, LogProbProvider, PredictionRecord, ProviderError, Query, Summary};
use crate::corpus::{Document, Vocabulary};
use crate::TokenId;

/// Hyperparameters of [`CacheNGramLM`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmParams {
    /// Order of the backoff model.
    pub n_lm: usize,
    /// Weight of the backoff model; the window cache gets `1 - lambda`.
    pub lambda: f64,
    /// Additive smoothing of the cache counts.
    pub alpha: f64,
    /// Order of the cache n-grams.
    pub n_cache: usize,
}

impl Default for LmParams {
    fn default() -> Self {
        LmParams {
            n_lm: 3,
            lambda: 0.7,
            alpha: 0.5,
            n_cache: 2,
        }
    }
}

impl LmParams {
    pub fn validate(&self) -> Result<(), ProviderError> {
        let bad = |msg: String| Err(ProviderError::InvalidParams(msg));
        if self.n_lm < 1 {
            return bad("n_lm must be at least 1".into());
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return bad(format!("lambda must lie in (0, 1), got {}", self.lambda));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.n_cache < 1 || self.n_cache > self.n_lm {
            return bad(format!(
                "n_cache must lie in 1..={}, got {}",
                self.n_lm, self.n_cache
            ));
        }
        Ok(())
    }
}

/// Successor counts of one history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ContextStats {
    total: u64,
    /// Sorted by token id.
    successors: Vec<(TokenId, u64)>,
}

/// Witten–Bell backoff n-gram model interpolated with a smoothed cache of
/// the current context window.
///
/// `p(w | ctx) = lambda * p_wb(w | last n_lm-1 tokens) + (1 - lambda) * p_cache(w | ctx)`
///
/// The backoff chain bottoms out at the uniform distribution over the
/// vocabulary, so every probability is strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheNGramLM {
    params: LmParams,
    vocab_size: usize,
    vocab_fingerprint: String,
    /// `tables[m]` maps histories of length `m` to their successors.
    tables: Vec<HashMap<Vec<TokenId>, ContextStats>>,
}

impl CacheNGramLM {
    pub fn train(
        corpus: &[Document],
        vocab: &Vocabulary,
        params: LmParams,
    ) -> Result<Self, ProviderError> {
        let seqs: Vec<&[TokenId]> = corpus.iter().map(|d| d.tokens.as_slice()).collect();
        Self::train_on_sequences(&seqs, vocab.len(), vocab.fingerprint(), params)
    }

    /// Counts every order `1..=n_lm` within each sequence; n-grams never
    /// cross sequence boundaries.
    pub fn train_on_sequences(
        seqs: &[&[TokenId]],
        vocab_size: usize,
        vocab_fingerprint: String,
        params: LmParams,
    ) -> Result<Self, ProviderError> {
        params.validate()?;
        if seqs.iter().all(|s| s.is_empty()) {
            return Err(ProviderError::EmptyCorpus);
        }
        let mut raw: Vec<HashMap<Vec<TokenId>, HashMap<TokenId, u64>>> =
            vec![HashMap::new(); params.n_lm];
        for seq in seqs {
            for (i, &w) in seq.iter().enumerate() {
                if w as usize >= vocab_size {
                    return Err(ProviderError::TokenOutOfRange { id: w, vocab_size });
                }
                for (m, table) in raw.iter_mut().enumerate().take(i + 1) {
                    *table
                        .entry(seq[i - m..i].to_vec())
                        .or_default()
                        .entry(w)
                        .or_default() += 1;
                }
            }
        }
        let tables = raw
            .into_iter()
            .map(|table| {
                table
                    .into_iter()
                    .map(|(h, succ)| {
                        let mut successors: Vec<_> = succ.into_iter().collect();
                        successors.sort_unstable();
                        let total = successors.iter().map(|&(_, c)| c).sum();
                        (h, ContextStats { total, successors })
                    })
                    .collect()
            })
            .collect();
        Ok(CacheNGramLM {
            params,
            vocab_size,
            vocab_fingerprint,
            tables,
        })
    }

    pub fn params(&self) -> &LmParams {
        &self.params
    }

    pub fn vocab_fingerprint(&self) -> &str {
        &self.vocab_fingerprint
    }

    fn check_ids(&self, ids: &[TokenId]) -> Result<(), ProviderError> {
        match ids.iter().find(|&&id| id as usize >= self.vocab_size) {
            Some(&id) => Err(ProviderError::TokenOutOfRange {
                id,
                vocab_size: self.vocab_size,
            }),
            None => Ok(()),
        }
    }

    /// Witten–Bell distribution given the last `n_lm - 1` context tokens.
    pub fn backoff_distribution(&self, context: &[TokenId]) -> Vec<f64> {
        let v = self.vocab_size;
        let mut dist = vec![1.0 / v as f64; v];
        let max_order = (self.params.n_lm - 1).min(context.len());
        for m in 0..=max_order {
            let history = &context[context.len() - m..];
            // an unseen history has no seen extensions either
            let Some(stats) = self.tables[m].get(history) else {
                break;
            };
            let types = stats.successors.len() as f64;
            let denom = stats.total as f64 + types;
            let scale = types / denom;
            for p in dist.iter_mut() {
                *p *= scale;
            }
            for &(w, c) in &stats.successors {
                dist[w as usize] += c as f64 / denom;
            }
        }
        dist
    }

    /// Additively smoothed continuation frequencies inside `window`.
    ///
    /// Counts successors of the last `n_cache - 1` window tokens among all
    /// `n_cache`-grams lying wholly inside the window. With no matching
    /// continuation, falls back to the window's unigram frequencies.
    pub fn cache_distribution(&self, window: &[TokenId]) -> Vec<f64> {
        let v = self.vocab_size;
        let mut counts = vec![0u32; v];
        let mut total = 0usize;
        let key_len = self.params.n_cache - 1;
        if key_len > 0 && window.len() > key_len {
            let key = &window[window.len() - key_len..];
            for j in 0..=window.len() - self.params.n_cache {
                if window[j..j + key_len] == *key {
                    counts[window[j + key_len] as usize] += 1;
                    total += 1;
                }
            }
        }
        if total == 0 {
            for &w in window {
                counts[w as usize] += 1;
            }
            total = window.len();
        }
        let alpha = self.params.alpha;
        let denom = total as f64 + alpha * v as f64;
        counts
            .into_iter()
            .map(|c| (c as f64 + alpha) / denom)
            .collect()
    }

    /// Full predictive distribution over the vocabulary.
    pub fn distribution(&self, context: &[TokenId]) -> Result<Vec<f64>, ProviderError> {
        self.check_ids(context)?;
        let lambda = self.params.lambda;
        let mut dist = self.backoff_distribution(context);
        let cache = self.cache_distribution(context);
        for (p, c) in dist.iter_mut().zip(cache) {
            *p = lambda * *p + (1.0 - lambda) * c;
        }
        Ok(dist)
    }

    pub fn predict(&self, context: &[TokenId], target: TokenId) -> Result<Summary, ProviderError> {
        self.check_ids(&[target])?;
        Ok(summarize(&self.distribution(context)?, target))
    }

    pub fn save<W: Write>(&self, writer: W) -> Result<(), ProviderError> {
        serde_json::to_writer(writer, &ModelArtifact::from(self))?;
        Ok(())
    }

    /// Loads a saved model, refusing it when `vocab` is not the vocabulary
    /// it was trained with.
    pub fn load<R: Read>(reader: R, vocab: &Vocabulary) -> Result<Self, ProviderError> {
        let artifact: ModelArtifact = serde_json::from_reader(std::io::BufReader::new(reader))?;
        let fingerprint = vocab.fingerprint();
        if artifact.vocab_fingerprint != fingerprint || artifact.vocab_size != vocab.len() {
            return Err(ProviderError::VocabMismatch {
                model: artifact.vocab_fingerprint,
                vocab: fingerprint,
            });
        }
        artifact.into_model()
    }
}

impl LogProbProvider for CacheNGramLM {
    fn score(&self, q: &Query<'_>) -> Result<PredictionRecord, ProviderError> {
        let s = self.predict(q.context, q.target)?;
        Ok(PredictionRecord {
            doc_id: q.doc_id.to_string(),
            k: q.k,
            token_index: q.token_index,
            context_len: q.context.len(),
            log_prob: s.log_prob,
            entropy: s.entropy,
            max_prob: s.max_prob,
            argmax_id: s.argmax_id,
            correct: s.correct,
        })
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }
}

const ARTIFACT_FORMAT: &str = "ctxdelta/cache-ngram";

/// On-disk form with tables in sorted order, so equal models serialize to
/// equal bytes.
#[derive(Serialize, Deserialize)]
struct ModelArtifact {
    format: String,
    version: u32,
    params: LmParams,
    vocab_size: usize,
    vocab_fingerprint: String,
    tables: Vec<Vec<TableEntry>>,
}

#[derive(Serialize, Deserialize)]
struct TableEntry {
    history: Vec<TokenId>,
    total: u64,
    successors: Vec<(TokenId, u64)>,
}

impl From<&CacheNGramLM> for ModelArtifact {
    fn from(lm: &CacheNGramLM) -> Self {
        let tables = lm
            .tables
            .iter()
            .map(|table| {
                let mut entries: Vec<TableEntry> = table
                    .iter()
                    .map(|(h, s)| TableEntry {
                        history: h.clone(),
                        total: s.total,
                        successors: s.successors.clone(),
                    })
                    .collect();
                entries.sort_unstable_by(|a, b| a.history.cmp(&b.history));
                entries
            })
            .collect();
        ModelArtifact {
            format: ARTIFACT_FORMAT.to_string(),
            version: 1,
            params: lm.params,
            vocab_size: lm.vocab_size,
            vocab_fingerprint: lm.vocab_fingerprint.clone(),
            tables,
        }
    }
}

impl ModelArtifact {
    fn into_model(self) -> Result<CacheNGramLM, ProviderError> {
        if self.format != ARTIFACT_FORMAT || self.version != 1 {
            return Err(ProviderError::InvalidParams(format!(
                "unsupported model artifact {} v{}",
                self.format, self.version
            )));
        }
        self.params.validate()?;
        if self.tables.len() != self.params.n_lm {
            return Err(ProviderError::InvalidParams(
                "table count does not match n_lm".into(),
            ));
        }
        let tables = self
            .tables
            .into_iter()
            .map(|entries| {
                entries
                    .into_iter()
                    .map(|e| {
                        (
                            e.history,
                            ContextStats {
                                total: e.total,
                                successors: e.successors,
                            },
                        )
                    })
                    .collect()
            })
            .collect();
        Ok(CacheNGramLM {
            params: self.params,
            vocab_size: self.vocab_size,
            vocab_fingerprint: self.vocab_fingerprint,
            tables,
        })
    }
}
