use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::output::{csv_bytes, fmt_opt, json_bytes, num, write_file};
use super::run::{load_documents, load_sweeps};
use super::{with_pool, ReportError, RunConfig, RunLog};
use crate::analytics::{
    build_comparisons, confidence_stats, decrease_increase_ratios, delta_d, delta_d_by_class,
    grouped_frequency_correlation, ngram_correlation, ngram_sweep, pos_class_decrements,
    AnalyticsError, CorrelationResult, PairedComparison, SubwordGap,
};
use crate::annotate::{build_frequency_table, FrequencyTable};
use crate::corpus::{Document, Vocabulary};
use crate::sweep::{align_comparisons, SweepResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Analysis {
    Ratios,
    Pos,
    Subword,
    Ngram,
    NgramSweep,
    Frequency,
    Confidence,
}

impl Analysis {
    pub const ALL: [Analysis; 7] = [
        Analysis::Ratios,
        Analysis::Pos,
        Analysis::Subword,
        Analysis::Ngram,
        Analysis::NgramSweep,
        Analysis::Frequency,
        Analysis::Confidence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Analysis::Ratios => "ratios",
            Analysis::Pos => "pos",
            Analysis::Subword => "subword",
            Analysis::Ngram => "ngram",
            Analysis::NgramSweep => "ngram-sweep",
            Analysis::Frequency => "frequency",
            Analysis::Confidence => "confidence",
        }
    }
}

impl fmt::Display for Analysis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Analysis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Analysis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown analysis {s:?}"))
    }
}

/// Comparisons of one `(K, 2K)` pair, grouped per document.
struct PairSet<'a> {
    k: usize,
    per_doc: Vec<(&'a Document, Vec<PairedComparison>)>,
}

impl PairSet<'_> {
    fn all(&self) -> Vec<PairedComparison> {
        self.per_doc.iter().flat_map(|(_, p)| p.iter().cloned()).collect()
    }
}

fn pair_sets<'a>(
    config: &RunConfig,
    pairs: &[(usize, usize)],
    docs: &'a [Document],
    sweeps: &[Vec<Option<SweepResult>>],
    tier_index: impl Fn(usize) -> usize + Sync,
    frequencies: Option<&FrequencyTable>,
    log: &mut RunLog,
) -> Result<Vec<PairSet<'a>>, ReportError> {
    let mut sets = Vec::new();
    for &(k, k2) in pairs {
        let per_doc = docs
            .par_iter()
            .zip(sweeps)
            .filter_map(|(doc, tiers)| {
                let (Some(a), Some(b)) = (&tiers[tier_index(k)], &tiers[tier_index(k2)]) else {
                    return None;
                };
                Some(
                    align_comparisons(a, b, doc)
                        .map_err(ReportError::from)
                        .and_then(|al| Ok(build_comparisons(doc, &al, config.n, frequencies)?))
                        .map(|p| (doc, p)),
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        let skipped: Vec<&str> = docs
            .iter()
            .filter(|d| !per_doc.iter().any(|(pd, _)| pd.doc_id == d.doc_id))
            .map(|d| d.doc_id.as_str())
            .collect();
        if !skipped.is_empty() {
            log.warn(
                "pair_skipped",
                json!({ "k": k, "k_long": k2, "doc_ids": skipped, "reason": "document shorter than 2K" }),
            );
        }
        sets.push(PairSet { k, per_doc });
    }
    if sets.iter().all(|s| s.per_doc.iter().all(|(_, p)| p.is_empty())) {
        return Err(ReportError::Analytics(AnalyticsError::Empty));
    }
    Ok(sets)
}

#[derive(Serialize)]
struct Report<'a, R: Serialize> {
    analysis: &'a str,
    config_hash: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_order: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    rows: Vec<R>,
}

#[derive(Serialize)]
struct RatioRow {
    k: usize,
    k_long: usize,
    decrease: f64,
    increase: f64,
    unchanged: f64,
    n: usize,
}

#[derive(Serialize)]
struct PosRow {
    k: usize,
    pos_class: String,
    mean_decrement: f64,
    n: usize,
}

#[derive(Serialize)]
struct SubwordRow {
    k: usize,
    stratum: String,
    delta_d: f64,
    first_mean: f64,
    first_n: usize,
    latter_mean: f64,
    latter_n: usize,
}

impl SubwordRow {
    fn new(k: usize, stratum: &str, g: &SubwordGap) -> Self {
        SubwordRow {
            k,
            stratum: stratum.to_string(),
            delta_d: g.delta_d,
            first_mean: g.first.mean,
            first_n: g.first.n,
            latter_mean: g.latter.mean,
            latter_n: g.latter.n,
        }
    }
}

#[derive(Serialize)]
struct CorrelationRow {
    k: usize,
    /// N-gram order or ratio group.
    key: String,
    rho: Option<f64>,
    p_value: Option<f64>,
    n: usize,
    significant: bool,
}

impl CorrelationRow {
    fn new(k: usize, key: String, n: usize, r: Option<&CorrelationResult>) -> Self {
        CorrelationRow {
            k,
            key,
            rho: r.map(|r| r.rho),
            p_value: r.map(|r| r.p_value),
            n,
            significant: r.is_some_and(|r| r.significant),
        }
    }

    fn cells(&self) -> Vec<String> {
        vec![
            self.k.to_string(),
            self.key.clone(),
            fmt_opt(self.rho),
            fmt_opt(self.p_value),
            self.n.to_string(),
            self.significant.to_string(),
        ]
    }
}

#[derive(Serialize)]
struct ConfidenceRow {
    k: usize,
    group: &'static str,
    mean_entropy: f64,
    mean_max_prob: f64,
    n: usize,
}

struct Rendered {
    csv: Vec<u8>,
    json: Vec<u8>,
}

fn render<R: Serialize>(
    analysis: Analysis,
    hash: &str,
    n_order: Option<usize>,
    epsilon: Option<f64>,
    header: &[&str],
    cells: Vec<Vec<String>>,
    rows: Vec<R>,
) -> Rendered {
    Rendered {
        csv: csv_bytes(hash, header, &cells),
        json: json_bytes(&Report {
            analysis: analysis.name(),
            config_hash: hash,
            n_order,
            epsilon,
            rows,
        }),
    }
}

/// Runs one analysis over existing sweep outputs and writes
/// `reports/<name>.csv` and `reports/<name>.json`.
pub fn cmd_analyze(config: &RunConfig, analysis: Analysis) -> Result<(PathBuf, PathBuf), ReportError> {
    let sweep = config.validate()?;
    if analysis != Analysis::Confidence && sweep.pairs().is_empty() {
        let k = sweep.tiers()[0].0;
        return Err(ReportError::Config(format!(
            "{analysis} compares tiers K and 2K, but context_lens {:?} has no such pair; add K={}",
            config.context_lens,
            2 * k
        )));
    }
    let mut log = RunLog::default();
    let hash = config.config_hash();
    let rendered = with_pool(config.workers, || {
        let (vocab, docs) = load_documents(config, &mut log)?;
        let sweeps = load_sweeps(config, &sweep, &docs)?;
        let tier_index = |k: usize| {
            sweep
                .tiers()
                .iter()
                .position(|t| t.0 == k)
                .expect("pair tiers are configured")
        };
        if analysis == Analysis::Confidence {
            return Ok(confidence(&hash, &sweeps));
        }
        let freq = if analysis == Analysis::Frequency {
            Some(frequencies(config, &vocab)?)
        } else {
            None
        };
        let sets = pair_sets(
            config,
            sweep.pairs(),
            &docs,
            &sweeps,
            tier_index,
            freq.as_ref(),
            &mut log,
        )?;
        run_analysis(analysis, config, &hash, &sets, &mut log)
    })?;
    let dir = config.out.join("reports");
    let csv = dir.join(format!("{}.csv", analysis.name()));
    let json = dir.join(format!("{}.json", analysis.name()));
    write_file(&csv, &rendered.csv)?;
    write_file(&json, &rendered.json)?;
    log.write(&config.out, &format!("analyze-{}", analysis.name()))?;
    Ok((csv, json))
}

fn frequencies(config: &RunConfig, vocab: &Vocabulary) -> Result<FrequencyTable, ReportError> {
    let mut files = Vec::new();
    for p in config.freq_paths() {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(ReportError::io(p))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|e| e == "txt"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    // count shards in parallel, merge in file order
    let shards = files
        .par_iter()
        .map(|f| build_frequency_table(std::slice::from_ref(f), vocab))
        .collect::<Result<Vec<_>, _>>()?;
    let mut table = FrequencyTable::new(vocab.len());
    for s in &shards {
        table.merge(s);
    }
    Ok(table)
}

fn confidence(hash: &str, sweeps: &[Vec<Option<SweepResult>>]) -> Rendered {
    let stats = confidence_stats(sweeps.iter().flatten().flatten());
    let mut rows = Vec::new();
    for (&k, row) in &stats {
        for (group, g) in [("T", row.t), ("F", row.f)] {
            if let Some(g) = g {
                rows.push(ConfidenceRow {
                    k,
                    group,
                    mean_entropy: g.mean_entropy,
                    mean_max_prob: g.mean_max_prob,
                    n: g.n,
                });
            }
        }
    }
    let cells = rows
        .iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                r.group.to_string(),
                num(r.mean_entropy),
                num(r.mean_max_prob),
                r.n.to_string(),
            ]
        })
        .collect();
    render(
        Analysis::Confidence,
        hash,
        None,
        None,
        &["k", "group", "mean_entropy", "mean_max_prob", "n"],
        cells,
        rows,
    )
}

fn run_analysis(
    analysis: Analysis,
    config: &RunConfig,
    hash: &str,
    sets: &[PairSet<'_>],
    log: &mut RunLog,
) -> Result<Rendered, ReportError> {
    let rendered = match analysis {
        Analysis::Ratios => {
            let mut rows = Vec::new();
            for s in sets {
                let pairs = s.all();
                if pairs.is_empty() {
                    continue;
                }
                let r = decrease_increase_ratios(&pairs, config.epsilon)?;
                rows.push(RatioRow {
                    k: s.k,
                    k_long: 2 * s.k,
                    decrease: r.decrease,
                    increase: r.increase,
                    unchanged: r.unchanged,
                    n: r.n,
                });
            }
            // Table layout: one column per K, one row per measure
            let mut header = vec!["measure".to_string()];
            header.extend(rows.iter().map(|r| r.k.to_string()));
            let line = |name: &str, f: &dyn Fn(&RatioRow) -> String| {
                let mut v = vec![name.to_string()];
                v.extend(rows.iter().map(f));
                v
            };
            let cells = vec![
                line("decrease", &|r| num(r.decrease)),
                line("increase", &|r| num(r.increase)),
                line("unchanged", &|r| num(r.unchanged)),
                line("n", &|r| r.n.to_string()),
            ];
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            render(analysis, hash, None, Some(config.epsilon), &header, cells, rows)
        }
        Analysis::Pos => {
            let mut rows = Vec::new();
            for s in sets {
                for (class, m) in pos_class_decrements(&s.all()) {
                    rows.push(PosRow {
                        k: s.k,
                        pos_class: class.to_string(),
                        mean_decrement: m.mean,
                        n: m.n,
                    });
                }
            }
            let cells = rows
                .iter()
                .map(|r| {
                    vec![
                        r.k.to_string(),
                        r.pos_class.clone(),
                        num(r.mean_decrement),
                        r.n.to_string(),
                    ]
                })
                .collect();
            render(
                analysis,
                hash,
                None,
                None,
                &["k", "pos_class", "mean_decrement", "n"],
                cells,
                rows,
            )
        }
        Analysis::Subword => {
            let mut rows = Vec::new();
            for s in sets {
                let pairs = s.all();
                match delta_d(&pairs) {
                    Some(g) => rows.push(SubwordRow::new(s.k, "all", &g)),
                    None => log.warn("stratum_omitted", json!({ "k": s.k, "stratum": "all" })),
                }
                let by = delta_d_by_class(&pairs);
                for class in crate::corpus::PosClass::ALL {
                    if class == crate::corpus::PosClass::Other {
                        continue;
                    }
                    match by.get(&class) {
                        Some(g) => rows.push(SubwordRow::new(s.k, class.as_str(), g)),
                        None => log.warn(
                            "stratum_omitted",
                            json!({ "k": s.k, "stratum": class.as_str() }),
                        ),
                    }
                }
            }
            let cells = rows
                .iter()
                .map(|r| {
                    vec![
                        r.k.to_string(),
                        r.stratum.clone(),
                        num(r.delta_d),
                        num(r.first_mean),
                        r.first_n.to_string(),
                        num(r.latter_mean),
                        r.latter_n.to_string(),
                    ]
                })
                .collect();
            render(
                analysis,
                hash,
                None,
                None,
                &["k", "stratum", "delta_d", "first_mean", "first_n", "latter_mean", "latter_n"],
                cells,
                rows,
            )
        }
        Analysis::Ngram => {
            let mut rows = Vec::new();
            for s in sets {
                let pairs = s.all();
                let r = match ngram_correlation(&pairs) {
                    Ok(r) => Some(r),
                    Err(e @ (AnalyticsError::Undefined(_) | AnalyticsError::TooFew { .. })) => {
                        log.warn("correlation_undefined", json!({ "k": s.k, "reason": e.to_string() }));
                        None
                    }
                    Err(e) => return Err(e.into()),
                };
                rows.push(CorrelationRow::new(s.k, config.n.to_string(), pairs.len(), r.as_ref()));
            }
            let cells = rows.iter().map(CorrelationRow::cells).collect();
            render(
                analysis,
                hash,
                Some(config.n),
                None,
                &["k", "n_order", "rho", "p_value", "n", "significant"],
                cells,
                rows,
            )
        }
        Analysis::NgramSweep => {
            let mut rows = Vec::new();
            for s in sets {
                let groups: Vec<(&Document, &[PairedComparison])> =
                    s.per_doc.iter().map(|(d, p)| (*d, p.as_slice())).collect();
                let n_pairs = groups.iter().map(|g| g.1.len()).sum();
                for point in ngram_sweep(&groups, config.n_range.lo..=config.n_range.hi)? {
                    rows.push(CorrelationRow::new(
                        s.k,
                        point.n.to_string(),
                        n_pairs,
                        point.result.as_ref(),
                    ));
                }
            }
            let cells = rows.iter().map(CorrelationRow::cells).collect();
            render(
                analysis,
                hash,
                None,
                None,
                &["k", "n_order", "rho", "p_value", "n", "significant"],
                cells,
                rows,
            )
        }
        Analysis::Frequency => {
            let mut rows = Vec::new();
            for s in sets {
                for g in grouped_frequency_correlation(&s.all(), config.extra_breakpoint) {
                    if g.result.is_none() {
                        log.warn(
                            "group_absent",
                            json!({ "k": s.k, "group": g.group.label(), "n": g.n }),
                        );
                    }
                    rows.push(CorrelationRow::new(
                        s.k,
                        g.group.label().to_string(),
                        g.n,
                        g.result.as_ref(),
                    ));
                }
            }
            let cells = rows.iter().map(CorrelationRow::cells).collect();
            render(
                analysis,
                hash,
                Some(config.n),
                None,
                &["k", "group", "rho", "p_value", "n", "significant"],
                cells,
                rows,
            )
        }
        Analysis::Confidence => unreachable!("handled before pairing"),
    };
    Ok(rendered)
}
