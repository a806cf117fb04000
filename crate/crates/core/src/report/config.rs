use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ReportError;
use crate::provider::LmParams;
use crate::sweep::{StrideRule, SweepConfig};

/// Where predictions come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ProviderChoice {
    /// The cache-augmented n-gram model.
    Builtin,
    /// Pre-extracted interchange records (file or directory).
    File(PathBuf),
}

impl FromStr for ProviderChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "builtin" => Ok(ProviderChoice::Builtin),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(ProviderChoice::File(p.into())),
                _ => Err(format!("provider must be builtin or file:<path>, got {s:?}")),
            },
        }
    }
}

impl fmt::Display for ProviderChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProviderChoice::Builtin => f.write_str("builtin"),
            ProviderChoice::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl TryFrom<String> for ProviderChoice {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ProviderChoice> for String {
    fn from(p: ProviderChoice) -> Self {
        p.to_string()
    }
}

/// Inclusive range of N-gram orders, written `3..20`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct NRange {
    pub lo: usize,
    pub hi: usize,
}

impl Default for NRange {
    fn default() -> Self {
        NRange { lo: 3, hi: 20 }
    }
}

impl FromStr for NRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| format!("expected LO..HI, got {s:?}"))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|e| format!("bad N {v:?}: {e}"))
        };
        let (lo, hi) = (parse(a)?, parse(b)?);
        if lo == 0 || lo > hi {
            return Err(format!("need 1 <= LO <= HI, got {s:?}"));
        }
        Ok(NRange { lo, hi })
    }
}

impl fmt::Display for NRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.lo, self.hi)
    }
}

impl TryFrom<String> for NRange {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<NRange> for String {
    fn from(r: NRange) -> Self {
        r.to_string()
    }
}

fn default_context_lens() -> Vec<usize> {
    vec![256, 512, 1024, 2048]
}

fn default_n() -> usize {
    5
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Everything a run depends on. Loaded from TOML; every key can be
/// overridden by the CLI flag of the same name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Analysis documents: text files, or directories of `*.txt` files.
    /// Each file is one document named after its stem.
    pub corpus: Vec<PathBuf>,
    /// Training text for the built-in model; the analysis corpus if empty.
    #[serde(default)]
    pub train_corpus: Vec<PathBuf>,
    pub vocab: PathBuf,
    /// `word<TAB>tag` file covering the corpus documents in order.
    #[serde(default)]
    pub tags: Option<PathBuf>,
    #[serde(default = "builtin")]
    pub provider: ProviderChoice,
    #[serde(default)]
    pub lm: LmParams,
    #[serde(default = "default_context_lens")]
    pub context_lens: Vec<usize>,
    #[serde(default)]
    pub stride: StrideRule,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub n_range: NRange,
    /// Reference text for token frequencies; the training corpus if empty.
    #[serde(default)]
    pub freq_corpus: Vec<PathBuf>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 picks one per core.
    #[serde(default)]
    pub workers: usize,
    /// Splits ratio group C at this value into C and D.
    #[serde(default)]
    pub extra_breakpoint: Option<f64>,
}

fn builtin() -> ProviderChoice {
    ProviderChoice::Builtin
}

fn hash_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))[..16].to_string()
}

impl RunConfig {
    /// A config with defaults for everything but the required paths.
    pub fn new(corpus: Vec<PathBuf>, vocab: PathBuf) -> Self {
        RunConfig {
            corpus,
            train_corpus: Vec::new(),
            vocab,
            tags: None,
            provider: ProviderChoice::Builtin,
            lm: LmParams::default(),
            context_lens: default_context_lens(),
            stride: StrideRule::default(),
            n: default_n(),
            n_range: NRange::default(),
            freq_corpus: Vec::new(),
            out: default_out(),
            epsilon: 0.0,
            seed: 0,
            workers: 0,
            extra_breakpoint: None,
        }
    }

    /// Reads a TOML file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ReportError::Config(format!("{}: {e}", path.display())))?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| ReportError::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            config.rebase(base);
        }
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in self
            .corpus
            .iter_mut()
            .chain(&mut self.train_corpus)
            .chain(&mut self.freq_corpus)
        {
            fix(p);
        }
        fix(&mut self.vocab);
        fix(&mut self.out);
        if let Some(t) = &mut self.tags {
            fix(t);
        }
        if let ProviderChoice::File(p) = &mut self.provider {
            fix(p);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// Checks everything that can be checked before any work starts.
    pub fn validate(&self) -> Result<SweepConfig, ReportError> {
        let bad = |m: String| Err(ReportError::Config(m));
        if self.corpus.is_empty() {
            return bad("no corpus paths given".into());
        }
        let mut paths: Vec<&PathBuf> = self
            .corpus
            .iter()
            .chain(&self.train_corpus)
            .chain(&self.freq_corpus)
            .chain(std::iter::once(&self.vocab))
            .chain(&self.tags)
            .collect();
        if let ProviderChoice::File(p) = &self.provider {
            paths.push(p);
        }
        for p in paths {
            if !p.exists() {
                return bad(format!("path does not exist: {}", p.display()));
            }
        }
        self.lm
            .validate()
            .map_err(|e| ReportError::Config(e.to_string()))?;
        let sweep = SweepConfig::new(&self.context_lens, &self.stride)
            .map_err(|e| ReportError::Config(e.to_string()))?;
        let min_k = self.context_lens[0];
        if self.n == 0 || self.n > min_k {
            return bad(format!("n must lie in 1..={min_k}, got {}", self.n));
        }
        if self.n_range.hi > min_k {
            return bad(format!(
                "n_range {} exceeds the smallest context length {min_k}",
                self.n_range
            ));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be finite and >= 0, got {}", self.epsilon));
        }
        if let Some(b) = self.extra_breakpoint {
            if !(b > 1.0 && b.is_finite()) {
                return bad(format!("extra_breakpoint must exceed 1, got {b}"));
            }
        }
        Ok(sweep)
    }

    pub fn train_paths(&self) -> &[PathBuf] {
        if self.train_corpus.is_empty() {
            &self.corpus
        } else {
            &self.train_corpus
        }
    }

    pub fn freq_paths(&self) -> &[PathBuf] {
        if self.freq_corpus.is_empty() {
            self.train_paths()
        } else {
            &self.freq_corpus
        }
    }

    /// Identifies every setting that affects outputs. Output directory
    /// and worker count are excluded: they change where and how fast, not
    /// what.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.workers = 0;
        hash_json(&c)
    }

    /// Identifies the settings a trained model depends on.
    pub fn model_hash(&self) -> String {
        hash_json(&(
            "model",
            self.train_paths(),
            &self.vocab,
            &self.corpus,
            &self.lm,
        ))
    }

    /// Identifies the settings sweep records depend on.
    pub fn sweep_hash(&self) -> String {
        hash_json(&(
            "sweep",
            &self.corpus,
            self.train_paths(),
            &self.vocab,
            &self.provider,
            &self.lm,
            &self.context_lens,
            &self.stride,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn provider_and_range_parse() {
        assert_eq!("builtin".parse::<ProviderChoice>(), Ok(ProviderChoice::Builtin));
        assert_eq!(
            "file:x/y".parse::<ProviderChoice>(),
            Ok(ProviderChoice::File("x/y".into()))
        );
        assert!("file:".parse::<ProviderChoice>().is_err());
        assert!("gpt".parse::<ProviderChoice>().is_err());
        assert_eq!("3..20".parse::<NRange>(), Ok(NRange { lo: 3, hi: 20 }));
        assert!("5..3".parse::<NRange>().is_err());
        assert!("0..3".parse::<NRange>().is_err());
    }

    #[test]
    fn toml_roundtrip_and_hashes() {
        let mut c = RunConfig::new(vec!["a".into()], "v.txt".into());
        c.n_range = NRange { lo: 3, hi: 5 };
        c.extra_breakpoint = Some(2.0);
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        let mut other = c.clone();
        other.out = "elsewhere".into();
        other.workers = 8;
        assert_eq!(c.config_hash(), other.config_hash());
        other.epsilon = 0.1;
        assert_ne!(c.config_hash(), other.config_hash());
        assert_eq!(c.sweep_hash(), other.sweep_hash());
    }

    #[test]
    fn minimal_toml_gets_defaults() {
        let c: RunConfig = toml::from_str("corpus = [\"c\"]\nvocab = \"v\"\n").unwrap();
        assert_eq!(c.n, 5);
        assert_eq!(c.context_lens, vec![256, 512, 1024, 2048]);
        assert_eq!(c.lm, LmParams::default());
        assert!(toml::from_str::<RunConfig>("corpus = []\nvocab = \"v\"\nbogus = 1\n").is_err());
    }

    #[test]
    fn validation() {
        let dir = tempfile::tempdir().unwrap();
        let v = dir.path().join("v.txt");
        std::fs::write(&v, "a\n").unwrap();
        let mut c = RunConfig::new(vec![v.clone()], v.clone());
        c.n_range = NRange { lo: 3, hi: 20 };
        assert!(c.validate().is_ok());
        c.context_lens = vec![512, 256];
        assert!(matches!(c.validate(), Err(ReportError::Config(_))));
        c.context_lens = vec![4, 8];
        c.n_range = NRange { lo: 1, hi: 4 };
        assert!(matches!(c.validate(), Err(ReportError::Config(m)) if m.contains("n must")));
        c.n = 3;
        assert!(c.validate().is_ok());
        c.corpus = vec![dir.path().join("missing")];
        assert!(matches!(c.validate(), Err(ReportError::Config(m)) if m.contains("missing")));
    }
}
