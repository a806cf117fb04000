use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use super::output::{csv_bytes, num, write_file};
use super::{with_pool, ProviderChoice, ReportError, RunConfig, RunLog};
use crate::corpus::{attach_pos_tags, read_tag_file, tag_with_fallback, tokenize, Document, Vocabulary};
use crate::provider::{
    read_records, write_records, CacheNGramLM, InterchangeHeader, LogProbProvider, RecordStore,
};
use crate::sweep::{ppl_table, run_sweep, SweepConfig, SweepResult};

pub(crate) const TOKENIZER_NAME: &str = "ctxdelta-greedy";

struct Source {
    doc_id: String,
    text: String,
}

/// Files named directly, plus the `*.txt` files of named directories, each
/// directory's files sorted by name.
fn expand(paths: &[PathBuf]) -> Result<Vec<PathBuf>, ReportError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(ReportError::io(p))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|e| e == "txt"))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn read_sources(paths: &[PathBuf]) -> Result<Vec<Source>, ReportError> {
    let mut seen = HashSet::new();
    let mut sources = Vec::new();
    for path in expand(paths)? {
        let doc_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        if !seen.insert(doc_id.clone()) {
            return Err(ReportError::Config(format!(
                "two corpus files share the document id {doc_id:?}"
            )));
        }
        let text = std::fs::read_to_string(&path).map_err(ReportError::io(&path))?;
        sources.push(Source { doc_id, text });
    }
    Ok(sources)
}

/// Vocabulary plus single-character fallbacks for every character of the
/// analysis and training text.
fn prepare(
    config: &RunConfig,
    log: &mut RunLog,
) -> Result<(Vocabulary, Vec<Source>, Vec<Source>), ReportError> {
    let mut vocab = Vocabulary::from_path(&config.vocab)?;
    let corpus = read_sources(&config.corpus)?;
    let train = if config.train_corpus.is_empty() {
        Vec::new()
    } else {
        read_sources(&config.train_corpus)?
    };
    let added: usize = corpus
        .iter()
        .chain(&train)
        .map(|s| vocab.ensure_chars(&s.text))
        .sum();
    if added > 0 {
        log.warn("fallback_entries_added", json!({ "count": added }));
    }
    Ok((vocab, corpus, train))
}

fn tokenize_all(sources: &[Source], vocab: &Vocabulary) -> Result<Vec<Document>, ReportError> {
    sources
        .par_iter()
        .map(|s| tokenize(&s.doc_id, &s.text, vocab).map_err(ReportError::from))
        .collect()
}

/// Tokenized analysis documents with POS classes attached, from the tag
/// file when configured and the fallback tagger otherwise.
pub fn load_documents(
    config: &RunConfig,
    log: &mut RunLog,
) -> Result<(Vocabulary, Vec<Document>), ReportError> {
    let (vocab, corpus, _) = prepare(config, log)?;
    let mut docs = tokenize_all(&corpus, &vocab)?;
    match &config.tags {
        Some(path) => {
            let file = std::fs::File::open(path).map_err(ReportError::io(path))?;
            let tags = read_tag_file(file)?;
            if tags.len() != docs.len() {
                return Err(ReportError::Config(format!(
                    "{} holds {} tagged documents, the corpus has {}",
                    path.display(),
                    tags.len(),
                    docs.len()
                )));
            }
            let mut unknown = 0;
            for (doc, t) in docs.iter_mut().zip(&tags) {
                unknown += attach_pos_tags(doc, t)?.unknown_tags;
            }
            if unknown > 0 {
                log.warn("unknown_pos_tags", json!({ "count": unknown }));
            }
        }
        None => {
            log.warn(
                "fallback_tagger",
                json!({ "note": "no tag file configured; POS classes come from suffix heuristics" }),
            );
            docs.iter_mut().for_each(tag_with_fallback);
        }
    }
    Ok((vocab, docs))
}

fn model_paths(out: &Path) -> (PathBuf, PathBuf) {
    (out.join("model.json"), out.join("model.hash"))
}

fn train_model(
    config: &RunConfig,
    vocab: &Vocabulary,
    corpus: &[Source],
    train: &[Source],
) -> Result<(CacheNGramLM, usize), ReportError> {
    let sources = if train.is_empty() { corpus } else { train };
    let docs = tokenize_all(sources, vocab)?;
    let tokens = docs.iter().map(Document::len).sum();
    Ok((CacheNGramLM::train(&docs, vocab, config.lm)?, tokens))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub model: PathBuf,
    pub tokens: usize,
    pub model_hash: String,
}

/// Trains the built-in model and writes `model.json` with a `model.hash`
/// sidecar naming the configuration it was trained under.
pub fn cmd_train(config: &RunConfig) -> Result<TrainSummary, ReportError> {
    config.validate()?;
    if config.provider != ProviderChoice::Builtin {
        return Err(ReportError::Config(
            "train needs provider = \"builtin\"".into(),
        ));
    }
    let mut log = RunLog::default();
    let (lm, tokens) = with_pool(config.workers, || {
        let (vocab, corpus, train) = prepare(config, &mut log)?;
        train_model(config, &vocab, &corpus, &train)
    })?;
    let (model, hash_path) = model_paths(&config.out);
    let mut buf = Vec::new();
    lm.save(&mut buf)?;
    write_file(&model, &buf)?;
    let model_hash = config.model_hash();
    write_file(&hash_path, format!("{model_hash}\n").as_bytes())?;
    log.info("trained", json!({ "tokens": tokens, "model_hash": model_hash }));
    log.write(&config.out, "train")?;
    Ok(TrainSummary {
        model,
        tokens,
        model_hash,
    })
}

/// The trained model from `out/` when its hash matches, otherwise a model
/// trained in memory.
fn obtain_model(
    config: &RunConfig,
    vocab: &Vocabulary,
    corpus: &[Source],
    train: &[Source],
    log: &mut RunLog,
) -> Result<CacheNGramLM, ReportError> {
    let (model, hash_path) = model_paths(&config.out);
    if model.exists() {
        let stored = std::fs::read_to_string(&hash_path).unwrap_or_default();
        if stored.trim() != config.model_hash() {
            return Err(ReportError::Config(format!(
                "{} was trained under a different configuration; rerun train",
                model.display()
            )));
        }
        let file = std::fs::File::open(&model).map_err(ReportError::io(&model))?;
        return Ok(CacheNGramLM::load(std::io::BufReader::new(file), vocab)?);
    }
    log.info("model_trained_in_memory", json!({ "note": "no model.json in output directory" }));
    Ok(train_model(config, vocab, corpus, train)?.0)
}

pub(crate) fn sweep_path(out: &Path, doc_id: &str, k: usize) -> PathBuf {
    out.join("sweeps").join(format!("{doc_id}.K{k}.ndjson"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub files: usize,
    /// `(doc_id, K)` tiers skipped because the document is shorter than K.
    pub skipped: Vec<(String, usize)>,
    pub corpus_ppl: BTreeMap<usize, f64>,
}

/// Scores every document at every tier, writing one interchange file per
/// `(document, K)` and `ppl.csv`. Refuses to touch earlier outputs unless
/// `force` is set.
pub fn cmd_sweep(config: &RunConfig, force: bool) -> Result<SweepSummary, ReportError> {
    let sweep = config.validate()?;
    let sweeps_dir = config.out.join("sweeps");
    let ppl_path = config.out.join("ppl.csv");
    let existing = sweeps_dir
        .read_dir()
        .map(|mut d| d.next().is_some())
        .unwrap_or(false)
        || ppl_path.exists();
    if existing {
        if !force {
            return Err(ReportError::Refused(format!(
                "{} already holds sweep outputs; pass --force to replace them",
                config.out.display()
            )));
        }
        if sweeps_dir.exists() {
            std::fs::remove_dir_all(&sweeps_dir).map_err(ReportError::io(&sweeps_dir))?;
        }
    }
    let mut log = RunLog::default();
    let hash = config.sweep_hash();
    let (docs, outcomes, header) = with_pool(config.workers, || {
        let (vocab, corpus, train) = prepare(config, &mut log)?;
        let docs = tokenize_all(&corpus, &vocab)?;
        let (provider, tokenizer): (Box<dyn LogProbProvider>, String) = match &config.provider {
            ProviderChoice::Builtin => (
                Box::new(obtain_model(config, &vocab, &corpus, &train, &mut log)?),
                TOKENIZER_NAME.to_string(),
            ),
            ProviderChoice::File(path) => {
                let store = RecordStore::open(path)?;
                let name = store.header().tokenizer_name.clone();
                (Box::new(store), name)
            }
        };
        let outcomes = docs
            .par_iter()
            .map(|d| run_sweep(provider.as_ref(), d, &sweep))
            .collect::<Result<Vec<_>, _>>()?;
        let header = InterchangeHeader {
            config_hash: Some(hash.clone()),
            ..InterchangeHeader::new(provider.vocab_size(), tokenizer)
        };
        Ok((docs, outcomes, header))
    })?;

    let mut files = 0;
    let mut skipped = Vec::new();
    for (doc, outcome) in docs.iter().zip(&outcomes) {
        for &k in &outcome.skipped {
            log.warn(
                "tier_skipped",
                json!({ "doc_id": doc.doc_id, "k": k, "tokens": doc.len() }),
            );
            skipped.push((doc.doc_id.clone(), k));
        }
        for r in &outcome.results {
            let path = sweep_path(&config.out, &doc.doc_id, r.k);
            let mut buf = Vec::new();
            write_records(&mut buf, &header, &r.records)?;
            write_file(&path, &buf)?;
            files += 1;
        }
    }

    let table = ppl_table(outcomes.iter().flat_map(|o| &o.results));
    write_file(&ppl_path, &ppl_csv(&config.config_hash(), &sweep, &docs, &table))?;
    log.write(&config.out, "sweep")?;
    Ok(SweepSummary {
        files,
        skipped,
        corpus_ppl: table.corpus,
    })
}

/// One row per document plus a `corpus_mean` row; one column per K. Tiers
/// a document was too short for are left empty.
fn ppl_csv(
    hash: &str,
    sweep: &SweepConfig,
    docs: &[Document],
    table: &crate::sweep::PplTable,
) -> Vec<u8> {
    let ks: Vec<usize> = sweep.tiers().iter().map(|t| t.0).collect();
    let mut header = vec!["doc_id".to_string()];
    header.extend(ks.iter().map(|k| k.to_string()));
    let cell = |v: Option<&f64>| v.map(|x| num(*x)).unwrap_or_default();
    let mut rows: Vec<Vec<String>> = docs
        .iter()
        .map(|d| {
            let mut row = vec![d.doc_id.clone()];
            row.extend(ks.iter().map(|&k| {
                cell(
                    table
                        .per_doc
                        .iter()
                        .find(|(id, kk, _)| *id == d.doc_id && *kk == k)
                        .map(|e| &e.2),
                )
            }));
            row
        })
        .collect();
    let mut mean = vec!["corpus_mean".to_string()];
    mean.extend(ks.iter().map(|k| cell(table.corpus.get(k))));
    rows.push(mean);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_bytes(hash, &header, &rows)
}

/// Reads the sweep results of every document at every tier. Entries are
/// `None` where the document is shorter than `K`. Files from a different
/// configuration are refused.
pub fn load_sweeps(
    config: &RunConfig,
    sweep: &SweepConfig,
    docs: &[Document],
) -> Result<Vec<Vec<Option<SweepResult>>>, ReportError> {
    let expected = config.sweep_hash();
    docs.par_iter()
        .map(|doc| {
            sweep
                .tiers()
                .iter()
                .map(|&(k, s)| {
                    let path = sweep_path(&config.out, &doc.doc_id, k);
                    if !path.exists() {
                        if doc.len() < k {
                            return Ok(None);
                        }
                        return Err(ReportError::Config(format!(
                            "missing sweep output {} for K={k}; run sweep first",
                            path.display()
                        )));
                    }
                    let file = std::fs::File::open(&path).map_err(ReportError::io(&path))?;
                    let (header, records) = read_records(file, &path.display().to_string())?;
                    if header.config_hash.as_deref() != Some(expected.as_str()) {
                        return Err(ReportError::Config(format!(
                            "{} was produced under sweep configuration {}, current is {expected}; rerun sweep",
                            path.display(),
                            header.config_hash.as_deref().unwrap_or("<none>")
                        )));
                    }
                    if records.len() != doc.len() {
                        return Err(ReportError::Config(format!(
                            "{} holds {} records for a document of {} tokens",
                            path.display(),
                            records.len(),
                            doc.len()
                        )));
                    }
                    Ok(Some(SweepResult::from_records(&doc.doc_id, k, s, records)?))
                })
                .collect()
        })
        .collect()
}
