//! Measurements over paired `K` / `2K` predictions.
//!
//! Sign convention: the decrement of a token is
//! `(-log p_K) - (-log p_2K)`, positive when the longer window raised the
//! probability of the true token.

mod spearman;

pub use spearman::{
    average_ranks, spearman, spearman_with, CorrelationResult, PValueMethod, MAX_PERMUTATION_N,
    SIGNIFICANCE_LEVEL,
};

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::annotate::{AnnotateError, FrequencyTable, NGramIndex, NGramStats};
use crate::corpus::{Document, PosClass};
use crate::provider::PredictionRecord;
use crate::sweep::{AlignedPair, SweepResult};
use crate::TokenId;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("no paired tokens to analyze")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {min} samples, got {n}")]
    TooFew { n: usize, min: usize },
    #[error("correlation undefined: {0}")]
    Undefined(String),
    #[error("exact permutation p-values support n <= 10, got {0}")]
    PermutationTooLarge(usize),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
}

/// Distribution sharpness of one prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Confidence {
    pub entropy: f64,
    pub max_prob: f64,
    pub correct: bool,
}

impl From<&PredictionRecord> for Confidence {
    fn from(r: &PredictionRecord) -> Self {
        Confidence {
            entropy: r.entropy,
            max_prob: r.max_prob,
            correct: r.correct,
        }
    }
}

/// One token compared between tiers `K` (short) and `2K` (long).
#[derive(Debug, Clone, PartialEq)]
pub struct PairedComparison {
    pub doc_id: String,
    pub k: usize,
    pub token_index: usize,
    pub token_id: TokenId,
    pub pos_class: PosClass,
    pub is_first_subword: bool,
    pub log_prob_short: f64,
    pub log_prob_long: f64,
    /// Token-perplexity decrement.
    pub decrement: f64,
    /// Magnitude of the token-perplexity change, `|decrement|`.
    pub change: f64,
    pub ngram: NGramStats,
    /// Count of the token in the reference corpus.
    pub frequency: u64,
    pub short: Confidence,
    pub long: Confidence,
}

/// `-(nll_long - nll_short)`.
pub fn decrement(log_prob_short: f64, log_prob_long: f64) -> f64 {
    -((-log_prob_long) - (-log_prob_short))
}

/// Attaches word-level properties, N-gram recurrence at order `n` and
/// token frequency to aligned records of `doc`.
pub fn build_comparisons(
    doc: &Document,
    aligned: &[AlignedPair],
    n: usize,
    frequencies: Option<&FrequencyTable>,
) -> Result<Vec<PairedComparison>, AnalyticsError> {
    let index = NGramIndex::new(&doc.tokens, n);
    aligned
        .iter()
        .map(|pair| {
            let i = pair.token_index;
            let k = pair.short.k;
            let d = decrement(pair.short.log_prob, pair.long.log_prob);
            let token_id = doc.tokens[i];
            Ok(PairedComparison {
                doc_id: doc.doc_id.clone(),
                k,
                token_index: i,
                token_id,
                pos_class: doc.pos_class[i],
                is_first_subword: doc.is_first_subword(i),
                log_prob_short: pair.short.log_prob,
                log_prob_long: pair.long.log_prob,
                decrement: d,
                change: d.abs(),
                ngram: index.stats(i, k)?,
                frequency: frequencies.map_or(0, |f| f.get(token_id)),
                short: (&pair.short).into(),
                long: (&pair.long).into(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChangeRatios {
    pub decrease: f64,
    pub increase: f64,
    pub unchanged: f64,
    pub n: usize,
}

/// Fractions of tokens whose decrement is above `epsilon`, below
/// `-epsilon`, or within it.
pub fn decrease_increase_ratios(
    pairs: &[PairedComparison],
    epsilon: f64,
) -> Result<ChangeRatios, AnalyticsError> {
    if pairs.is_empty() {
        return Err(AnalyticsError::Empty);
    }
    let (mut dec, mut inc) = (0usize, 0usize);
    for p in pairs {
        if p.decrement > epsilon {
            dec += 1;
        } else if p.decrement < -epsilon {
            inc += 1;
        }
    }
    let n = pairs.len();
    let same = n - dec - inc;
    Ok(ChangeRatios {
        decrease: dec as f64 / n as f64,
        increase: inc as f64 / n as f64,
        unchanged: same as f64 / n as f64,
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupMean {
    pub mean: f64,
    pub n: usize,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<GroupMean> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| GroupMean {
        mean: sum / n as f64,
        n,
    })
}

/// Mean decrement per POS class; classes with no tokens are absent.
pub fn pos_class_decrements(pairs: &[PairedComparison]) -> BTreeMap<PosClass, GroupMean> {
    PosClass::ALL
        .iter()
        .filter_map(|&c| {
            mean_of(pairs.iter().filter(|p| p.pos_class == c).map(|p| p.decrement))
                .map(|m| (c, m))
        })
        .collect()
}

/// First-subword minus latter-subword mean decrement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubwordGap {
    pub delta_d: f64,
    pub first: GroupMean,
    pub latter: GroupMean,
}

fn subword_gap<'a>(pairs: impl Iterator<Item = &'a PairedComparison> + Clone) -> Option<SubwordGap> {
    let first = mean_of(pairs.clone().filter(|p| p.is_first_subword).map(|p| p.decrement))?;
    let latter = mean_of(pairs.filter(|p| !p.is_first_subword).map(|p| p.decrement))?;
    Some(SubwordGap {
        delta_d: first.mean - latter.mean,
        first,
        latter,
    })
}

/// Gap over all tokens; `None` when either set is empty.
pub fn delta_d(pairs: &[PairedComparison]) -> Option<SubwordGap> {
    subword_gap(pairs.iter())
}

/// Gap per POS class, `other` excluded. Classes lacking first or latter
/// subwords are omitted.
pub fn delta_d_by_class(pairs: &[PairedComparison]) -> BTreeMap<PosClass, SubwordGap> {
    PosClass::ALL
        .iter()
        .filter(|&&c| c != PosClass::Other)
        .filter_map(|&c| {
            let gap = subword_gap(pairs.iter().filter(move |p| p.pos_class == c));
            if gap.is_none() {
                log::warn!("ΔD for {c}: first or latter subword set empty, omitted");
            }
            gap.map(|g| (c, g))
        })
        .collect()
}

/// Rank correlation between the new-occurrence ratio and the decrement.
pub fn ngram_correlation(pairs: &[PairedComparison]) -> Result<CorrelationResult, AnalyticsError> {
    let ratios: Vec<f64> = pairs.iter().map(|p| p.ngram.ratio).collect();
    if ratios.len() >= 3 && ratios.iter().all(|&r| r == ratios[0]) {
        return Err(AnalyticsError::Undefined("no ΔN variation".into()));
    }
    let decs: Vec<f64> = pairs.iter().map(|p| p.decrement).collect();
    spearman(&ratios, &decs)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NGramSweepPoint {
    pub n: usize,
    /// `None` when the correlation is undefined at this order.
    pub result: Option<CorrelationResult>,
}

/// Recomputes the ratio at every order in `orders` and correlates it with
/// the decrement. `groups` pairs each document with its comparisons.
pub fn ngram_sweep(
    groups: &[(&Document, &[PairedComparison])],
    orders: impl IntoIterator<Item = usize>,
) -> Result<Vec<NGramSweepPoint>, AnalyticsError> {
    let mut points = Vec::new();
    for n in orders {
        let mut ratios = Vec::new();
        let mut decs = Vec::new();
        for (doc, pairs) in groups {
            let index = NGramIndex::new(&doc.tokens, n);
            for p in pairs.iter() {
                ratios.push(index.stats(p.token_index, p.k)?.ratio);
                decs.push(p.decrement);
            }
        }
        let result = match spearman(&ratios, &decs) {
            Ok(r) => Some(r),
            Err(AnalyticsError::Undefined(_) | AnalyticsError::TooFew { .. }) => None,
            Err(e) => return Err(e),
        };
        points.push(NGramSweepPoint { n, result });
    }
    Ok(points)
}

/// Tokens grouped by how their N-gram's occurrences moved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum RatioGroup {
    /// Fewer occurrences in the new context (ratio < 1).
    A,
    /// Equal counts (ratio exactly 1).
    B,
    /// More occurrences in the new context, up to the optional breakpoint.
    C,
    /// Above the optional breakpoint.
    D,
}

impl RatioGroup {
    pub fn of(stats: &NGramStats, breakpoint: Option<f64>) -> RatioGroup {
        use std::cmp::Ordering::*;
        match stats.count_new.cmp(&stats.count_original) {
            Less => RatioGroup::A,
            Equal => RatioGroup::B,
            Greater => match breakpoint {
                Some(b) if stats.ratio > b => RatioGroup::D,
                _ => RatioGroup::C,
            },
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RatioGroup::A => "A",
            RatioGroup::B => "B",
            RatioGroup::C => "C",
            RatioGroup::D => "D",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupCorrelation {
    pub group: RatioGroup,
    pub n: usize,
    /// `None` when the group has fewer than 3 tokens or a constant input.
    pub result: Option<CorrelationResult>,
}

/// Rank correlation of frequency against the change magnitude, within
/// each ratio group. An extra breakpoint `b > 1` splits off group D.
pub fn grouped_frequency_correlation(
    pairs: &[PairedComparison],
    breakpoint: Option<f64>,
) -> Vec<GroupCorrelation> {
    let mut groups: BTreeMap<RatioGroup, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut all = vec![RatioGroup::A, RatioGroup::B, RatioGroup::C];
    if breakpoint.is_some() {
        all.push(RatioGroup::D);
    }
    for g in &all {
        groups.insert(*g, (Vec::new(), Vec::new()));
    }
    for p in pairs {
        let g = groups
            .get_mut(&RatioGroup::of(&p.ngram, breakpoint))
            .expect("all groups present");
        g.0.push(p.frequency as f64);
        g.1.push(p.change);
    }
    groups
        .into_iter()
        .map(|(group, (fr, ch))| GroupCorrelation {
            group,
            n: fr.len(),
            result: spearman(&fr, &ch).ok(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidenceGroup {
    pub mean_entropy: f64,
    pub mean_max_prob: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidenceRow {
    /// Correctly predicted tokens.
    pub t: Option<ConfidenceGroup>,
    /// Incorrectly predicted tokens.
    pub f: Option<ConfidenceGroup>,
}

/// Mean entropy and max probability of the correct and incorrect groups,
/// per tier, over every record in `results`.
pub fn confidence_stats<'a>(
    results: impl IntoIterator<Item = &'a SweepResult>,
) -> BTreeMap<usize, ConfidenceRow> {
    #[derive(Default)]
    struct Acc {
        e: f64,
        mp: f64,
        n: usize,
    }
    let mut acc: BTreeMap<usize, [Acc; 2]> = BTreeMap::new();
    for r in results {
        let slot = acc.entry(r.k).or_default();
        for rec in &r.records {
            let a = &mut slot[usize::from(!rec.correct)];
            a.e += rec.entropy;
            a.mp += rec.max_prob;
            a.n += 1;
        }
    }
    let finish = |a: &Acc| {
        (a.n > 0).then(|| ConfidenceGroup {
            mean_entropy: a.e / a.n as f64,
            mean_max_prob: a.mp / a.n as f64,
            n: a.n,
        })
    };
    acc.iter()
        .map(|(&k, [t, f])| {
            (
                k,
                ConfidenceRow {
                    t: finish(t),
                    f: finish(f),
                },
            )
        })
        .collect()
}
