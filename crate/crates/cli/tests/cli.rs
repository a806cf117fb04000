use std::path::Path;
use std::process::{Command, Output};

fn ctxdelta(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctxdelta"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Small synthetic corpus with a config; returns the config path.
fn synth(dir: &Path, docs: usize) -> String {
    let o = ctxdelta(&[
        "synth",
        "--out",
        dir.to_str().unwrap(),
        "--docs",
        &docs.to_string(),
        "--doc-tokens",
        "1200",
        "--train-docs",
        "1",
        "--train-doc-tokens",
        "2000",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join("config.toml").to_str().unwrap().to_string()
}

#[test]
fn unknown_analysis_is_a_usage_error() {
    let o = ctxdelta(&["analyze", "nonsense", "--config", "x.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_corpus_path_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let vocab = dir.path().join("vocab.txt");
    std::fs::write(&vocab, "a\nb\n").unwrap();
    let o = ctxdelta(&[
        "sweep",
        "--corpus",
        dir.path().join("absent.txt").to_str().unwrap(),
        "--vocab",
        vocab.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("absent.txt"), "{}", stderr(&o));
}

#[test]
fn two_tiers_on_one_document() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path(), 1);
    let o = ctxdelta(&["sweep", "-c", &config, "--context-lens", "64,128"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let sweeps: Vec<_> = std::fs::read_dir(dir.path().join("out/sweeps"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(sweeps.len(), 2, "{sweeps:?}");
    let ppl = std::fs::read_to_string(dir.path().join("out/ppl.csv")).unwrap();
    let rows: Vec<&str> = ppl.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 3, "{ppl}");
    assert_eq!(rows[0], "doc_id,64,128");
    assert!(rows[2].starts_with("corpus_mean,"));

    let o = ctxdelta(&["analyze", "all", "-c", &config, "--context-lens", "64,128"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["ratios", "pos", "subword", "ngram", "ngram-sweep", "frequency", "confidence"] {
        let csv = dir.path().join(format!("out/reports/{name}.csv"));
        assert!(csv.exists(), "missing {name}.csv");
    }
}

#[test]
fn rerun_without_force_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path(), 1);
    let args = ["sweep", "-c", &config, "--context-lens", "64,128"];
    assert!(ctxdelta(&args).status.success());
    let o = ctxdelta(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--force"), "{}", stderr(&o));
    let mut forced = args.to_vec();
    forced.push("--force");
    let o = ctxdelta(&forced);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn missing_comparison_pair_names_the_tier() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path(), 1);
    let o = ctxdelta(&["analyze", "ratios", "-c", &config, "--context-lens", "64,96"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("K=128"), "{}", stderr(&o));
}

#[test]
fn outputs_from_another_configuration_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path(), 1);
    let o = ctxdelta(&["sweep", "-c", &config, "--context-lens", "64,128"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = ctxdelta(&[
        "analyze", "ratios", "-c", &config, "--context-lens", "64,128", "--lambda", "0.5",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("configuration"), "{}", stderr(&o));
}

#[test]
fn stale_model_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth(dir.path(), 1);
    assert!(ctxdelta(&["train", "-c", &config]).status.success());
    let o = ctxdelta(&[
        "sweep", "-c", &config, "--context-lens", "64,128", "--alpha", "0.25",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rerun train"), "{}", stderr(&o));
}
