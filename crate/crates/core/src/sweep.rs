//! Stride-chunked sliding-window evaluation.
//!
//! A document is cut into chunks of `K` tokens starting at `0, S, 2S, ...`.
//! Every token of the first chunk is scored from its in-chunk predecessors;
//! later chunks score only their last `S` tokens. A final chunk anchored at
//! the document end picks up any suffix the stride grid leaves unscored.
//! Each token is therefore scored exactly once per tier, from between
//! `K - S` and `K - 1` preceding tokens once past the first chunk.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::provider::{LogProbProvider, PredictionRecord, ProviderError, Query};

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep configuration: {0}")]
    Config(String),
    #[error("cannot align {doc_id:?}: {detail}")]
    Alignment { doc_id: String, detail: String },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// How the stride `S` is derived from a context length `K`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StrideRule {
    /// `S = max(1, K / d)`.
    Ratio(usize),
    Fixed(usize),
    /// Explicit `K -> S` entries.
    Table(BTreeMap<usize, usize>),
}

impl Default for StrideRule {
    fn default() -> Self {
        StrideRule::Ratio(200)
    }
}

impl StrideRule {
    pub fn stride_for(&self, k: usize) -> Result<usize, SweepError> {
        let s = match self {
            StrideRule::Ratio(d) => (k / d).max(1),
            StrideRule::Fixed(s) => *s,
            StrideRule::Table(t) => *t
                .get(&k)
                .ok_or_else(|| SweepError::Config(format!("no stride given for K={k}")))?,
        };
        if s == 0 || s > k {
            return Err(SweepError::Config(format!(
                "stride {s} for K={k} must lie in 1..=K"
            )));
        }
        Ok(s)
    }
}

impl FromStr for StrideRule {
    type Err = String;

    /// `ratio:200`, `fixed:8`, or `1024=5,2048=10`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|e| format!("bad number {v:?} in stride rule: {e}"))
        };
        if let Some(d) = s.strip_prefix("ratio:") {
            let d = num(d)?;
            if d == 0 {
                return Err("ratio divisor must be positive".into());
            }
            Ok(StrideRule::Ratio(d))
        } else if let Some(v) = s.strip_prefix("fixed:") {
            Ok(StrideRule::Fixed(num(v)?))
        } else {
            let mut table = BTreeMap::new();
            for entry in s.split(',').filter(|e| !e.trim().is_empty()) {
                let (k, v) = entry
                    .split_once('=')
                    .ok_or_else(|| format!("expected ratio:D, fixed:S or K=S list, got {s:?}"))?;
                table.insert(num(k)?, num(v)?);
            }
            if table.is_empty() {
                return Err("empty stride table".into());
            }
            Ok(StrideRule::Table(table))
        }
    }
}

impl fmt::Display for StrideRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrideRule::Ratio(d) => write!(f, "ratio:{d}"),
            StrideRule::Fixed(s) => write!(f, "fixed:{s}"),
            StrideRule::Table(t) => {
                let parts: Vec<String> = t.iter().map(|(k, s)| format!("{k}={s}")).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

impl TryFrom<String> for StrideRule {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<StrideRule> for String {
    fn from(r: StrideRule) -> Self {
        r.to_string()
    }
}

/// Context-length tiers, their strides, and the `(K, 2K)` comparisons.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepConfig {
    tiers: Vec<(usize, usize)>,
    pairs: Vec<(usize, usize)>,
}

impl SweepConfig {
    /// Every `K` must be even and at least 2, listed in strictly ascending
    /// order. Comparison pairs are all `(K, 2K)` with both tiers present.
    pub fn new(context_lens: &[usize], rule: &StrideRule) -> Result<Self, SweepError> {
        if context_lens.is_empty() {
            return Err(SweepError::Config("no context lengths".into()));
        }
        if context_lens.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SweepError::Config(
                "context lengths must be strictly ascending".into(),
            ));
        }
        let mut tiers = Vec::with_capacity(context_lens.len());
        for &k in context_lens {
            if k < 2 || k % 2 != 0 {
                return Err(SweepError::Config(format!(
                    "context length {k} must be even and >= 2"
                )));
            }
            tiers.push((k, rule.stride_for(k)?));
        }
        let pairs = context_lens
            .iter()
            .filter(|&&k| context_lens.contains(&(2 * k)))
            .map(|&k| (k, 2 * k))
            .collect();
        Ok(SweepConfig { tiers, pairs })
    }

    pub fn tiers(&self) -> &[(usize, usize)] {
        &self.tiers
    }

    pub fn stride(&self, k: usize) -> Option<usize> {
        self.tiers.iter().find(|t| t.0 == k).map(|t| t.1)
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn max_k(&self) -> usize {
        self.tiers.last().map_or(0, |t| t.0)
    }
}

/// One evaluation window: tokens `start..scored.end`, of which `scored`
/// are recorded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub start: usize,
    pub scored: Range<usize>,
}

impl Chunk {
    /// Context window of token `i`: its in-chunk predecessors.
    pub fn context(&self, i: usize) -> Range<usize> {
        self.start..i
    }
}

/// Chunk layout for a document of `len` tokens. Documents shorter than `k`
/// get a single chunk covering everything.
pub fn chunk_plan(len: usize, k: usize, s: usize) -> Vec<Chunk> {
    assert!(k >= 1 && s >= 1 && s <= k, "need 1 <= S <= K");
    if len == 0 {
        return Vec::new();
    }
    let first_end = k.min(len);
    let mut chunks = vec![Chunk {
        start: 0,
        scored: 0..first_end,
    }];
    let mut covered = first_end;
    let mut start = s;
    while start + k <= len {
        chunks.push(Chunk {
            start,
            scored: start + k - s..start + k,
        });
        covered = start + k;
        start += s;
    }
    if covered < len {
        chunks.push(Chunk {
            start: len - k,
            scored: covered..len,
        });
    }
    chunks
}

/// All predictions for one document at one tier.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub doc_id: String,
    pub k: usize,
    pub stride: usize,
    /// Indexed by token position.
    pub records: Vec<PredictionRecord>,
    /// Mean token-perplexity (mean negative log-probability, nats).
    pub ppl: f64,
}

impl SweepResult {
    /// Assembles a result from records covering `0..n` exactly once.
    pub fn from_records(
        doc_id: &str,
        k: usize,
        stride: usize,
        mut records: Vec<PredictionRecord>,
    ) -> Result<Self, SweepError> {
        records.sort_by_key(|r| r.token_index);
        for (i, r) in records.iter().enumerate() {
            if r.token_index != i || r.doc_id != doc_id || r.k != k {
                return Err(SweepError::Alignment {
                    doc_id: doc_id.to_string(),
                    detail: format!(
                        "record set for K={k} is not a permutation of 0..{}",
                        records.len()
                    ),
                });
            }
        }
        let ppl = mean_nll(&records);
        Ok(SweepResult {
            doc_id: doc_id.to_string(),
            k,
            stride,
            records,
            ppl,
        })
    }
}

fn mean_nll(records: &[PredictionRecord]) -> f64 {
    if records.is_empty() {
        return f64::NAN;
    }
    records.iter().map(PredictionRecord::nll).sum::<f64>() / records.len() as f64
}

/// Scores every token of `doc` at tier `k` with stride `s`. Chunks run in
/// parallel on the current rayon pool; the result does not depend on
/// scheduling.
pub fn sweep_tier(
    provider: &dyn LogProbProvider,
    doc: &Document,
    k: usize,
    s: usize,
) -> Result<SweepResult, SweepError> {
    let plan = chunk_plan(doc.len(), k, s);
    let per_chunk: Vec<Vec<PredictionRecord>> = plan
        .par_iter()
        .map(|chunk| {
            chunk
                .scored
                .clone()
                .map(|i| {
                    provider.score(&Query {
                        doc_id: &doc.doc_id,
                        k,
                        token_index: i,
                        context: &doc.tokens[chunk.context(i)],
                        target: doc.tokens[i],
                    })
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    let records: Vec<PredictionRecord> = per_chunk.into_iter().flatten().collect();
    let ppl = mean_nll(&records);
    Ok(SweepResult {
        doc_id: doc.doc_id.clone(),
        k,
        stride: s,
        records,
        ppl,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub results: Vec<SweepResult>,
    /// Tiers skipped because the document is shorter than `K`.
    pub skipped: Vec<usize>,
}

/// Runs every configured tier over `doc`.
pub fn run_sweep(
    provider: &dyn LogProbProvider,
    doc: &Document,
    config: &SweepConfig,
) -> Result<SweepOutcome, SweepError> {
    let mut outcome = SweepOutcome {
        results: Vec::new(),
        skipped: Vec::new(),
    };
    for &(k, s) in config.tiers() {
        if doc.len() < k {
            log::warn!("{}: {} tokens, skipping K={k}", doc.doc_id, doc.len());
            outcome.skipped.push(k);
            continue;
        }
        outcome.results.push(sweep_tier(provider, doc, k, s)?);
    }
    Ok(outcome)
}

/// Per-document and corpus-mean perplexity per tier.
#[derive(Debug, Clone, PartialEq)]
pub struct PplTable {
    /// `(doc_id, K, ppl)` in input order.
    pub per_doc: Vec<(String, usize, f64)>,
    /// Unweighted mean over documents, per `K`.
    pub corpus: BTreeMap<usize, f64>,
}

pub fn ppl_table<'a>(results: impl IntoIterator<Item = &'a SweepResult>) -> PplTable {
    let mut per_doc = Vec::new();
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for r in results {
        per_doc.push((r.doc_id.clone(), r.k, r.ppl));
        let e = sums.entry(r.k).or_insert((0.0, 0));
        e.0 += r.ppl;
        e.1 += 1;
    }
    let corpus = sums
        .into_iter()
        .map(|(k, (sum, n))| (k, sum / n as f64))
        .collect();
    PplTable { per_doc, corpus }
}

/// Records of one token at tiers `K` and `2K`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair {
    pub token_index: usize,
    pub short: PredictionRecord,
    pub long: PredictionRecord,
}

/// Pairs the `K` and `2K` records of every token with index `>= 2K - 1`,
/// i.e. every token whose original and new contexts both lie inside the
/// document.
pub fn align_comparisons(
    short: &SweepResult,
    long: &SweepResult,
    doc: &Document,
) -> Result<Vec<AlignedPair>, SweepError> {
    let fail = |detail: String| SweepError::Alignment {
        doc_id: doc.doc_id.clone(),
        detail,
    };
    if long.k != 2 * short.k {
        return Err(fail(format!(
            "second tier K={} is not twice K={}",
            long.k, short.k
        )));
    }
    if short.doc_id != doc.doc_id || long.doc_id != doc.doc_id {
        return Err(fail(format!(
            "results belong to {:?}/{:?}",
            short.doc_id, long.doc_id
        )));
    }
    if short.records.len() != doc.len() || long.records.len() != doc.len() {
        return Err(fail("record count differs from document length".into()));
    }
    let first = 2 * short.k - 1;
    Ok((first..doc.len())
        .map(|i| AlignedPair {
            token_index: i,
            short: short.records[i].clone(),
            long: long.records[i].clone(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::TokenId;
    use proptest::prelude::*;
    use std::sync::Mutex;

    /// Records the context each call saw; log_prob encodes nothing useful.
    struct Spy {
        seen: Mutex<Vec<(usize, Vec<TokenId>)>>,
    }

    impl LogProbProvider for Spy {
        fn score(&self, q: &Query<'_>) -> Result<PredictionRecord, ProviderError> {
            self.seen
                .lock()
                .unwrap()
                .push((q.token_index, q.context.to_vec()));
            Ok(PredictionRecord {
                doc_id: q.doc_id.into(),
                k: q.k,
                token_index: q.token_index,
                context_len: q.context.len(),
                log_prob: -((q.context.len() + 1) as f64).ln(),
                entropy: 0.0,
                max_prob: 1.0,
                argmax_id: 0,
                correct: false,
            })
        }
        fn vocab_size(&self) -> usize {
            100
        }
    }

    fn doc(len: usize) -> Document {
        Document {
            doc_id: "d".into(),
            tokens: (0..len as TokenId).collect(),
            token_strings: vec![String::new(); len],
            word_index: (0..len).collect(),
            within_word_pos: vec![0; len],
            pos_class: vec![crate::corpus::PosClass::Other; len],
            words: vec![String::new(); len],
            space_before: vec![true; len],
        }
    }

    #[test]
    fn six_tokens_k4_s2() {
        let plan = chunk_plan(6, 4, 2);
        assert_eq!(
            plan,
            vec![
                Chunk { start: 0, scored: 0..4 },
                Chunk { start: 2, scored: 4..6 }
            ]
        );
        assert_eq!(plan[1].context(5), 2..5);
    }

    #[test]
    fn stride_equal_to_k_gives_disjoint_chunks() {
        let plan = chunk_plan(12, 4, 4);
        let starts: Vec<_> = plan.iter().map(|c| c.start).collect();
        assert_eq!(starts, vec![0, 4, 8]);
        for c in &plan {
            assert_eq!(c.scored.start, c.start);
        }
    }

    #[test]
    fn unit_stride_uses_full_chunk_history() {
        let spy = Spy { seen: Mutex::new(Vec::new()) };
        let d = doc(10);
        sweep_tier(&spy, &d, 4, 1).unwrap();
        for (i, ctx) in spy.seen.into_inner().unwrap() {
            let expect: Vec<TokenId> = (i.saturating_sub(3)..i).map(|t| t as TokenId).collect();
            assert_eq!(ctx, expect, "token {i}");
        }
    }

    #[test]
    fn unaligned_tail_gets_anchored_chunk() {
        let plan = chunk_plan(11, 4, 3);
        // starts 0, 3, 6 cover 0..10; final chunk 7..11 scores 10
        assert_eq!(plan.last().unwrap(), &Chunk { start: 7, scored: 10..11 });
    }

    #[test]
    fn ppl_table_means() {
        let mk = |id: &str, lp: f64| {
            let recs = (0..4)
                .map(|i| PredictionRecord {
                    doc_id: id.into(),
                    k: 2,
                    token_index: i,
                    context_len: i.min(1),
                    log_prob: lp,
                    entropy: 0.0,
                    max_prob: 1.0,
                    argmax_id: 0,
                    correct: false,
                })
                .collect();
            SweepResult::from_records(id, 2, 1, recs).unwrap()
        };
        let half = mk("a", -(2f64.ln()));
        assert!((half.ppl - std::f64::consts::LN_2).abs() < 1e-15);
        let t = ppl_table([&mk("a", -1.0), &mk("b", -3.0)]);
        assert_eq!(t.corpus[&2], 2.0);
        assert_eq!(t.per_doc.len(), 2);
    }

    #[test]
    fn config_validation() {
        let r = StrideRule::Fixed(2);
        assert!(SweepConfig::new(&[4, 8], &r).is_ok());
        assert!(SweepConfig::new(&[3], &r).is_err());
        assert!(SweepConfig::new(&[8, 4], &r).is_err());
        assert!(SweepConfig::new(&[2], &StrideRule::Fixed(3)).is_err());
        let c = SweepConfig::new(&[4, 8, 12, 16, 24], &StrideRule::Ratio(4)).unwrap();
        assert_eq!(c.pairs(), &[(4, 8), (8, 16), (12, 24)]);
        assert_eq!(c.stride(16), Some(4));
        assert_eq!(c.stride(4), Some(1));
    }

    #[test]
    fn stride_rule_parsing() {
        for s in ["ratio:200", "fixed:8", "64=1,128=2"] {
            assert_eq!(s.parse::<StrideRule>().unwrap().to_string(), s);
        }
        assert!("ratio:0".parse::<StrideRule>().is_err());
        assert!("bogus".parse::<StrideRule>().is_err());
        assert!(StrideRule::Table(BTreeMap::new()).stride_for(4).is_err());
    }

    #[test]
    fn align_ranges() {
        let spy = Spy { seen: Mutex::new(Vec::new()) };
        let k = 4;
        for (len, expect) in [(2 * k - 1, 0), (2 * k + 1, 2)] {
            let d = doc(len);
            let a = sweep_tier(&spy, &d, k, 1).unwrap();
            let b = sweep_tier(&spy, &d, 2 * k, 1).unwrap();
            let pairs = align_comparisons(&a, &b, &d).unwrap();
            assert_eq!(pairs.len(), expect);
            if expect == 2 {
                assert_eq!(pairs[0].token_index, 2 * k - 1);
                assert_eq!(pairs[1].token_index, 2 * k);
            }
            assert!(align_comparisons(&a, &a, &d).is_err());
        }
    }

    proptest! {
        #[test]
        fn scored_positions_partition_document(len in 1usize..300, k_half in 1usize..40, s_frac in 0.0f64..1.0) {
            let k = 2 * k_half;
            let s = ((k as f64 * s_frac) as usize).clamp(1, k);
            let plan = chunk_plan(len, k, s);
            let mut hits = vec![0u8; len];
            for c in &plan {
                prop_assert!(c.scored.end <= len);
                prop_assert!(c.scored.start >= c.start);
                prop_assert!(c.scored.end <= c.start + k);
                for i in c.scored.clone() {
                    hits[i] += 1;
                    let ctx = c.context(i).len();
                    if c.start > 0 {
                        prop_assert!(ctx >= k - s && ctx < k, "ctx {} k {} s {}", ctx, k, s);
                    } else {
                        prop_assert_eq!(ctx, i);
                    }
                }
            }
            prop_assert!(hits.iter().all(|&h| h == 1));
        }
    }
}
