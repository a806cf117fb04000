use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ctxdelta::provider::LmParams;
use ctxdelta::report::{
    cmd_analyze, cmd_sweep, cmd_train, Analysis, NRange, ProviderChoice, ReportError, RunConfig,
};
use ctxdelta::sweep::StrideRule;
use ctxdelta::synth::{generate, SynthConfig};

/// Per-token perplexity attribution across growing context windows.
#[derive(Parser)]
#[command(name = "ctxdelta", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic corpus and a matching config.toml.
    Synth(SynthArgs),
    /// Train the built-in cache n-gram model.
    Train(RunArgs),
    /// Score every document at every context length.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Replace existing sweep outputs.
        #[arg(long)]
        force: bool,
    },
    /// Run analyses over existing sweep outputs.
    Analyze {
        #[arg(required = true, value_enum)]
        analyses: Vec<AnalysisArg>,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    docs: Option<usize>,
    #[arg(long)]
    doc_tokens: Option<usize>,
    #[arg(long)]
    train_docs: Option<usize>,
    #[arg(long)]
    train_doc_tokens: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AnalysisArg {
    Ratios,
    Pos,
    Subword,
    Ngram,
    NgramSweep,
    Frequency,
    Confidence,
    All,
}

/// Config file plus one override flag per config key.
#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    corpus: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    train_corpus: Vec<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    tags: Option<PathBuf>,
    /// builtin or file:<path>
    #[arg(long)]
    provider: Option<ProviderChoice>,
    #[arg(long)]
    n_lm: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    n_cache: Option<usize>,
    /// Comma-separated, ascending.
    #[arg(long, value_delimiter = ',')]
    context_lens: Vec<usize>,
    /// ratio:D, fixed:S or K=S,K=S,...
    #[arg(long)]
    stride: Option<StrideRule>,
    #[arg(long)]
    n: Option<usize>,
    /// LO..HI, inclusive.
    #[arg(long)]
    n_range: Option<NRange>,
    #[arg(long, num_args = 1..)]
    freq_corpus: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    extra_breakpoint: Option<f64>,
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig, ReportError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => {
                let vocab = self.vocab.clone().ok_or_else(|| {
                    ReportError::Config("give --config, or --corpus and --vocab".into())
                })?;
                RunConfig::new(self.corpus.clone(), vocab)
            }
        };
        if !self.corpus.is_empty() {
            c.corpus = self.corpus;
        }
        if !self.train_corpus.is_empty() {
            c.train_corpus = self.train_corpus;
        }
        if !self.freq_corpus.is_empty() {
            c.freq_corpus = self.freq_corpus;
        }
        if !self.context_lens.is_empty() {
            c.context_lens = self.context_lens;
        }
        let LmParams {
            n_lm,
            lambda,
            alpha,
            n_cache,
        } = &mut c.lm;
        set(n_lm, self.n_lm);
        set(lambda, self.lambda);
        set(alpha, self.alpha);
        set(n_cache, self.n_cache);
        set(&mut c.vocab, self.vocab);
        set(&mut c.provider, self.provider);
        set(&mut c.stride, self.stride);
        set(&mut c.n, self.n);
        set(&mut c.n_range, self.n_range);
        set(&mut c.out, self.out);
        set(&mut c.epsilon, self.epsilon);
        set(&mut c.seed, self.seed);
        set(&mut c.workers, self.workers);
        if self.tags.is_some() {
            c.tags = self.tags;
        }
        if self.extra_breakpoint.is_some() {
            c.extra_breakpoint = self.extra_breakpoint;
        }
        Ok(c)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig::default();
    set(&mut cfg.seed, args.seed);
    set(&mut cfg.docs, args.docs);
    set(&mut cfg.doc_tokens, args.doc_tokens);
    set(&mut cfg.train_docs, args.train_docs);
    set(&mut cfg.train_doc_tokens, args.train_doc_tokens);
    let corpus = generate(&cfg)?;
    let paths = corpus
        .write(&args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    let mut run = RunConfig::new(vec!["corpus".into()], "vocab.txt".into());
    run.train_corpus = vec!["train".into()];
    run.tags = Some("corpus.tags".into());
    run.seed = cfg.seed;
    let config_path = args.out.join("config.toml");
    std::fs::write(&config_path, run.to_toml())
        .with_context(|| format!("writing {}", config_path.display()))?;
    let tokens: usize = corpus.docs.iter().map(|d| d.tokens).sum();
    println!(
        "{} documents, {tokens} tokens, vocabulary {} -> {}",
        corpus.docs.len(),
        corpus.vocab.len(),
        paths.corpus.display()
    );
    println!("config: {}", config_path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => synth(args)?,
        Command::Train(args) => {
            let s = cmd_train(&args.resolve()?)?;
            println!("trained on {} tokens -> {}", s.tokens, s.model.display());
        }
        Command::Sweep { run, force } => {
            let s = cmd_sweep(&run.resolve()?, force)?;
            println!("{} sweep files, {} tiers skipped", s.files, s.skipped.len());
            for (k, ppl) in &s.corpus_ppl {
                println!("K={k}\tppl={ppl:.6}");
            }
        }
        Command::Analyze { analyses, run } => {
            let config = run.resolve()?;
            let mut list: Vec<Analysis> = Vec::new();
            for a in analyses {
                match a {
                    AnalysisArg::All => list.extend(Analysis::ALL),
                    AnalysisArg::Ratios => list.push(Analysis::Ratios),
                    AnalysisArg::Pos => list.push(Analysis::Pos),
                    AnalysisArg::Subword => list.push(Analysis::Subword),
                    AnalysisArg::Ngram => list.push(Analysis::Ngram),
                    AnalysisArg::NgramSweep => list.push(Analysis::NgramSweep),
                    AnalysisArg::Frequency => list.push(Analysis::Frequency),
                    AnalysisArg::Confidence => list.push(Analysis::Confidence),
                }
            }
            list.dedup();
            for a in list {
                let (csv, _) = cmd_analyze(&config, a)?;
                println!("{a}: {}", csv.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<ReportError>()
                .map_or(1, ReportError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
