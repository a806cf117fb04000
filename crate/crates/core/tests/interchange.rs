use std::path::{Path, PathBuf};

use ctxdelta::corpus::{tokenize, Vocabulary};
use ctxdelta::provider::{read_records, ProviderError, RecordStore};
use ctxdelta::report::{cmd_analyze, cmd_sweep, Analysis, ProviderChoice, RunConfig};
use ctxdelta::sweep::{chunk_plan, sweep_tier, StrideRule, SweepError};

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/interchange")
}

fn fixture_doc() -> ctxdelta::corpus::Document {
    let dir = fixture_dir();
    let vocab = Vocabulary::from_path(dir.join("vocab.txt")).unwrap();
    let text = std::fs::read_to_string(dir.join("ext.txt")).unwrap();
    tokenize("ext", &text, &vocab).unwrap()
}

/// The committed records, as plain JSON values.
fn raw_records(k: usize) -> Vec<serde_json::Value> {
    let text = std::fs::read_to_string(fixture_dir().join(format!("ext.K{k}.ndjson"))).unwrap();
    text.lines()
        .skip(1)
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn fixture_loads_without_validation_errors() {
    let store = RecordStore::open(fixture_dir()).unwrap();
    assert_eq!(store.len(), 128);
    assert_eq!(store.header().vocab_size, 20);
    assert_eq!(store.header().tokenizer_name, "fixture-whitespace");
    for k in [16, 32] {
        let file = std::fs::File::open(fixture_dir().join(format!("ext.K{k}.ndjson"))).unwrap();
        let (_, records) = read_records(file, "fixture").unwrap();
        assert_eq!(records.len(), 64);
    }
}

#[test]
fn scored_positions_match_engine_layout() {
    let doc = fixture_doc();
    assert_eq!(doc.len(), 64);
    for k in [16, 32] {
        let plan = chunk_plan(doc.len(), k, 4);
        let mut expected = vec![usize::MAX; doc.len()];
        for c in &plan {
            for i in c.scored.clone() {
                expected[i] = c.context(i).len();
            }
        }
        let got: Vec<usize> = raw_records(k)
            .iter()
            .map(|r| r["context_len"].as_u64().unwrap() as usize)
            .collect();
        assert_eq!(got, expected, "K={k}");
    }
}

#[test]
fn replayed_sweep_returns_stored_records() {
    let doc = fixture_doc();
    let store = RecordStore::open(fixture_dir()).unwrap();
    for k in [16, 32] {
        let r = sweep_tier(&store, &doc, k, 4).unwrap();
        let raw = raw_records(k);
        assert_eq!(r.records.len(), raw.len());
        for (rec, v) in r.records.iter().zip(&raw) {
            assert_eq!(rec.log_prob, v["log_prob"].as_f64().unwrap());
            assert_eq!(rec.token_index, v["token_index"].as_u64().unwrap() as usize);
        }
    }
}

#[test]
fn replay_under_other_stride_is_refused() {
    let doc = fixture_doc();
    let store = RecordStore::open(fixture_dir()).unwrap();
    match sweep_tier(&store, &doc, 16, 8) {
        Err(SweepError::Provider(ProviderError::ContextMismatch { k: 16, .. })) => {}
        other => panic!("expected a context mismatch, got {other:?}"),
    }
}

fn file_config(out: &Path) -> RunConfig {
    let dir = fixture_dir();
    let mut c = RunConfig::new(vec![dir.join("ext.txt")], dir.join("vocab.txt"));
    c.provider = ProviderChoice::File(dir.clone());
    c.context_lens = vec![16, 32];
    c.stride = StrideRule::Fixed(4);
    c.n = 3;
    c.n_range = "2..4".parse().unwrap();
    c.out = out.to_path_buf();
    c
}

#[test]
fn ppl_csv_matches_recomputation_from_records() {
    let out = tempfile::tempdir().unwrap();
    let config = file_config(out.path());
    cmd_sweep(&config, false).unwrap();

    let text = std::fs::read_to_string(out.path().join("ppl.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert_eq!(lines.next().unwrap(), "doc_id,16,32");
    let doc_row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(doc_row[0], "ext");
    for (col, k) in [(1, 16), (2, 32)] {
        let raw = raw_records(k);
        let mean = raw
            .iter()
            .map(|r| -r["log_prob"].as_f64().unwrap())
            .sum::<f64>()
            / raw.len() as f64;
        let got: f64 = doc_row[col].parse().unwrap();
        assert!((got - mean).abs() <= 1e-12, "K={k}: {got} vs {mean}");
    }
    assert!(lines.next().unwrap().starts_with("corpus_mean,"));
    assert!(lines.next().is_none());

    // written sweep files carry the same records
    let store = RecordStore::open(out.path().join("sweeps")).unwrap();
    assert_eq!(store.len(), 128);
    assert!(store.header().config_hash.is_some());
}

#[test]
fn analyses_run_over_replayed_records() {
    let out = tempfile::tempdir().unwrap();
    let config = file_config(out.path());
    cmd_sweep(&config, false).unwrap();
    let (_, json) = cmd_analyze(&config, Analysis::Ratios).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    let row = &report["rows"][0];
    // tokens 31..64 have both windows inside the document
    assert_eq!(row["n"], 33);
    let total = row["decrease"].as_f64().unwrap()
        + row["increase"].as_f64().unwrap()
        + row["unchanged"].as_f64().unwrap();
    assert!((total - 1.0).abs() < 1e-12);
    for a in [Analysis::Pos, Analysis::Ngram, Analysis::Confidence] {
        cmd_analyze(&config, a).unwrap();
    }
}
