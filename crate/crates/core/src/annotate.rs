//! Per-token covariates: N-gram recurrence across the original and new
//! context windows, first/latter subword membership, and corpus frequency.
//!
//! For a token at index `i` compared between tiers `K` and `2K`:
//! - original context: `[i-K+1, i-1]`, what the model saw at tier `K`;
//! - new context: `[i-2K+1, i-K]`, what tier `2K` adds on top.
//!
//! The two windows are disjoint and adjacent. Occurrences of the N-gram
//! ending at `i` are counted only when they lie wholly inside one window,
//! overlaps included; occurrences straddling the boundary count for
//! neither.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::ops::Range;
use std::path::Path;

use thiserror::Error;

use crate::corpus::{tokenize, CorpusError, Document, Vocabulary};
use crate::TokenId;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("token {i} needs i >= 2K-1 = {min} for K={k}")]
    TooEarly { i: usize, k: usize, min: usize },
    #[error("invalid N={n}: {detail}")]
    BadOrder { n: usize, detail: String },
    #[error("token index {i} beyond document of {len} tokens")]
    OutOfRange { i: usize, len: usize },
    #[error("{path}:{line}: {detail}")]
    Format {
        path: String,
        line: usize,
        detail: String,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// N-gram recurrence of one token.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NGramStats {
    pub token_index: usize,
    pub n: usize,
    pub count_original: usize,
    pub count_new: usize,
    /// `(count_new + 1) / (count_original + 1)`.
    pub ratio: f64,
}

impl NGramStats {
    fn new(token_index: usize, n: usize, count_original: usize, count_new: usize) -> Self {
        NGramStats {
            token_index,
            n,
            count_original,
            count_new,
            ratio: (count_new + 1) as f64 / (count_original + 1) as f64,
        }
    }
}

/// `(original, new)` windows of token `i` at tier `k`.
pub fn context_windows(i: usize, k: usize) -> (Range<usize>, Range<usize>) {
    (i + 1 - k..i, i + 1 - 2 * k..i + 1 - k)
}

fn check(len: usize, i: usize, n: usize, k: usize) -> Result<(), AnnotateError> {
    if i >= len {
        return Err(AnnotateError::OutOfRange { i, len });
    }
    if i + 1 < 2 * k {
        return Err(AnnotateError::TooEarly {
            i,
            k,
            min: 2 * k - 1,
        });
    }
    if n == 0 || n > k {
        return Err(AnnotateError::BadOrder {
            n,
            detail: format!("need 1 <= N <= K={k}"),
        });
    }
    Ok(())
}

/// Occurrences of `gram` lying wholly inside `tokens[window]`.
fn count_in(tokens: &[TokenId], window: Range<usize>, gram: &[TokenId]) -> usize {
    tokens[window].windows(gram.len()).filter(|w| *w == gram).count()
}

/// Counts the N-gram ending at `i` in both context windows by direct scan.
pub fn ngram_stats(doc: &Document, i: usize, n: usize, k: usize) -> Result<NGramStats, AnnotateError> {
    ngram_stats_in(&doc.tokens, i, n, k)
}

pub fn ngram_stats_in(
    tokens: &[TokenId],
    i: usize,
    n: usize,
    k: usize,
) -> Result<NGramStats, AnnotateError> {
    check(tokens.len(), i, n, k)?;
    let gram = &tokens[i + 1 - n..=i];
    let (original, new) = context_windows(i, k);
    Ok(NGramStats::new(
        i,
        n,
        count_in(tokens, original, gram),
        count_in(tokens, new, gram),
    ))
}

/// Start positions of every N-gram in a sequence, for logarithmic-time
/// window counts over many tokens of the same document.
pub struct NGramIndex<'a> {
    tokens: &'a [TokenId],
    n: usize,
    starts: HashMap<&'a [TokenId], Vec<usize>>,
}

impl<'a> NGramIndex<'a> {
    pub fn new(tokens: &'a [TokenId], n: usize) -> Self {
        let mut starts: HashMap<&[TokenId], Vec<usize>> = HashMap::new();
        if n > 0 {
            for (j, gram) in tokens.windows(n).enumerate() {
                starts.entry(gram).or_default().push(j);
            }
        }
        NGramIndex { tokens, n, starts }
    }

    fn count_starts(&self, gram: &[TokenId], window: Range<usize>) -> usize {
        if window.len() < self.n {
            return 0;
        }
        let Some(pos) = self.starts.get(gram) else {
            return 0;
        };
        // starts j with window.start <= j and j + n <= window.end
        let last = window.end - self.n;
        pos.partition_point(|&j| j <= last) - pos.partition_point(|&j| j < window.start)
    }

    pub fn stats(&self, i: usize, k: usize) -> Result<NGramStats, AnnotateError> {
        check(self.tokens.len(), i, self.n, k)?;
        let gram = &self.tokens[i + 1 - self.n..=i];
        let (original, new) = context_windows(i, k);
        Ok(NGramStats::new(
            i,
            self.n,
            self.count_starts(gram, original),
            self.count_starts(gram, new),
        ))
    }
}

/// Splits token indices into word-initial (`Fir`) and continuation (`Lat`).
pub fn subword_partition(doc: &Document) -> (Vec<usize>, Vec<usize>) {
    (0..doc.len()).partition(|&i| doc.is_first_subword(i))
}

/// Token counts over a reference corpus.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrequencyTable {
    counts: Vec<u64>,
    total: u64,
}

impl FrequencyTable {
    pub fn new(vocab_size: usize) -> Self {
        FrequencyTable {
            counts: vec![0; vocab_size],
            total: 0,
        }
    }

    pub fn add(&mut self, id: TokenId) {
        let id = id as usize;
        if id >= self.counts.len() {
            self.counts.resize(id + 1, 0);
        }
        self.counts[id] += 1;
        self.total += 1;
    }

    /// Count of `id`; zero for ids never seen.
    pub fn get(&self, id: TokenId) -> u64 {
        self.counts.get(id as usize).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Adds another table's counts, e.g. from a separately counted shard.
    pub fn merge(&mut self, other: &FrequencyTable) {
        if other.counts.len() > self.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
    }

    /// `#total<TAB>N`, then `token_id<TAB>count` for every nonzero count.
    pub fn write<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        writeln!(writer, "#total\t{}", self.total)?;
        for (id, &c) in self.counts.iter().enumerate().filter(|(_, &c)| c > 0) {
            writeln!(writer, "{id}\t{c}")?;
        }
        writer.flush()
    }

    pub fn read<R: Read>(reader: R, origin: &str) -> Result<Self, AnnotateError> {
        let bad = |line: usize, detail: &str| AnnotateError::Format {
            path: origin.to_string(),
            line,
            detail: detail.to_string(),
        };
        let io = |source| AnnotateError::Io {
            path: origin.to_string(),
            source,
        };
        let mut lines = BufReader::new(reader).lines();
        let header = lines.next().ok_or_else(|| bad(1, "missing header"))?.map_err(io)?;
        let total: u64 = header
            .strip_prefix("#total\t")
            .and_then(|t| t.trim().parse().ok())
            .ok_or_else(|| bad(1, "expected #total<TAB>N"))?;
        let mut table = FrequencyTable::default();
        let mut sum = 0u64;
        for (n, line) in lines.enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let (id, count) = line
                .split_once('\t')
                .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.trim().parse::<u64>().ok()?)))
                .ok_or_else(|| bad(n + 2, "expected token_id<TAB>count"))?;
            if id >= table.counts.len() {
                table.counts.resize(id + 1, 0);
            }
            table.counts[id] += count;
            sum += count;
        }
        if sum != total {
            return Err(bad(1, "header total disagrees with the sum of counts"));
        }
        table.total = total;
        Ok(table)
    }
}

/// Counts tokens over every file in `paths`, line by line, so memory does
/// not grow with corpus size.
pub fn build_frequency_table<P: AsRef<Path>>(
    paths: &[P],
    vocab: &Vocabulary,
) -> Result<FrequencyTable, AnnotateError> {
    let mut table = FrequencyTable::new(vocab.len());
    for path in paths {
        let path = path.as_ref();
        let io = |source| AnnotateError::Io {
            path: path.display().to_string(),
            source,
        };
        let file = std::fs::File::open(path).map_err(io)?;
        for line in BufReader::new(file).lines() {
            let line = line.map_err(io)?;
            for id in tokenize("", &line, vocab)?.tokens {
                table.add(id);
            }
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(tokens: &[TokenId], window: Range<usize>, gram: &[TokenId]) -> usize {
        let mut c = 0;
        for j in window.clone() {
            if j + gram.len() > window.end {
                break;
            }
            if (0..gram.len()).all(|t| tokens[j + t] == gram[t]) {
                c += 1;
            }
        }
        c
    }

    #[test]
    fn overlapping_occurrences_count() {
        // a b a b a contains "a b a" twice
        let t = [0, 1, 0, 1, 0];
        assert_eq!(count_in(&t, 0..5, &[0, 1, 0]), 2);
        assert_eq!(naive(&t, 0..5, &[0, 1, 0]), 2);
    }

    #[test]
    fn absent_gram_has_unit_ratio() {
        let t: Vec<TokenId> = (0..20).collect();
        let s = ngram_stats_in(&t, 19, 3, 8).unwrap();
        assert_eq!((s.count_original, s.count_new), (0, 0));
        assert_eq!(s.ratio, 1.0);
    }

    #[test]
    fn ratio_arithmetic() {
        assert_eq!(NGramStats::new(0, 1, 1, 3).ratio, 2.0);
        assert_eq!(NGramStats::new(0, 1, 4, 4).ratio, 1.0);
    }

    #[test]
    fn windows_are_adjacent_and_disjoint() {
        let (o, n) = context_windows(7, 4);
        assert_eq!(o, 4..7);
        assert_eq!(n, 0..4);
        assert_eq!(n.end, o.start);
    }

    #[test]
    fn counts_in_each_window() {
        // K = 4, i = 9: new = 2..6, original = 6..9, unigram of token 9 (= 5)
        let t = [9, 9, 5, 5, 5, 9, 5, 9, 9, 5];
        let s = ngram_stats_in(&t, 9, 1, 4).unwrap();
        assert_eq!((s.count_new, s.count_original), (3, 1));
        assert_eq!(s.ratio, 2.0);
    }

    #[test]
    fn precondition_errors() {
        let t: Vec<TokenId> = (0..10).collect();
        assert!(matches!(
            ngram_stats_in(&t, 6, 2, 4),
            Err(AnnotateError::TooEarly { min: 7, .. })
        ));
        assert!(ngram_stats_in(&t, 7, 2, 4).is_ok());
        assert!(matches!(ngram_stats_in(&t, 9, 5, 4), Err(AnnotateError::BadOrder { .. })));
        assert!(matches!(ngram_stats_in(&t, 9, 0, 4), Err(AnnotateError::BadOrder { .. })));
        assert!(matches!(ngram_stats_in(&t, 10, 2, 4), Err(AnnotateError::OutOfRange { .. })));
    }

    #[test]
    fn frequency_table_counts_and_roundtrip() {
        let mut v = Vocabulary::new(["a", "b", "c"]).unwrap();
        v.ensure_chars("abc");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        std::fs::write(&p, "a a\nb\n").unwrap();
        let t = build_frequency_table(&[&p], &v).unwrap();
        assert_eq!((t.get(0), t.get(1), t.get(2), t.total()), (2, 1, 0, 3));
        assert_eq!(t.get(999), 0);
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "#total\t3\n0\t2\n1\t1\n");
        let back = FrequencyTable::read(&buf[..], "mem").unwrap();
        assert_eq!(back.get(0), 2);
        assert_eq!(back.total(), 3);
        assert!(FrequencyTable::read(&b"#total\t4\n0\t2\n"[..], "mem").is_err());
        assert!(matches!(
            build_frequency_table(&[dir.path().join("missing")], &v),
            Err(AnnotateError::Io { .. })
        ));
    }

    #[test]
    fn merge_is_additive() {
        let mut a = FrequencyTable::new(2);
        a.add(0);
        let mut b = FrequencyTable::new(4);
        b.add(3);
        b.add(0);
        a.merge(&b);
        assert_eq!((a.get(0), a.get(3), a.total()), (2, 1, 3));
    }

    proptest! {
        #[test]
        fn index_and_scan_match_naive(
            tokens in proptest::collection::vec(0u32..3, 8..120),
            k_half in 1usize..8,
            n in 1usize..5,
            pick in 0.0f64..1.0,
        ) {
            let k = 2 * k_half;
            prop_assume!(n <= k && tokens.len() >= 2 * k);
            let i = 2 * k - 1 + ((tokens.len() - 2 * k) as f64 * pick) as usize;
            let gram = &tokens[i + 1 - n..=i];
            let (o, w) = context_windows(i, k);
            let scan = ngram_stats_in(&tokens, i, n, k).unwrap();
            prop_assert_eq!(scan.count_original, naive(&tokens, o, gram));
            prop_assert_eq!(scan.count_new, naive(&tokens, w, gram));
            let idx = NGramIndex::new(&tokens, n).stats(i, k).unwrap();
            prop_assert_eq!(idx, scan);
            prop_assert_eq!(scan.ratio == 1.0, scan.count_new == scan.count_original);
        }

        #[test]
        fn prepending_k_tokens_shifts_nothing(
            tokens in proptest::collection::vec(0u32..3, 16..80),
            junk in proptest::collection::vec(3u32..6, 4),
            n in 1usize..4,
        ) {
            let k = 4;
            let mut shifted = junk.clone();
            shifted.extend_from_slice(&tokens);
            for i in 2 * k - 1..tokens.len() {
                let a = ngram_stats_in(&tokens, i, n, k).unwrap();
                let b = ngram_stats_in(&shifted, i + k, n, k).unwrap();
                prop_assert_eq!((a.count_original, a.count_new), (b.count_original, b.count_new));
            }
        }
    }
}
