//! Seeded synthetic corpora with recurring motifs.
//!
//! Text is drawn from a small template grammar over a generated lexicon of
//! pseudo-words built from syllable pieces, so multi-token words, every POS
//! class and Penn tags all occur. Each document has its own topic words and
//! a set of motif sentences that recur at random distances, which is what
//! lets a window cache profit from longer contexts. The training corpus is
//! drawn from the same grammar with different topics and motifs.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, CorpusError, TaggedWord, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub docs: usize,
    /// Approximate tokens per analysis document.
    pub doc_tokens: usize,
    pub train_docs: usize,
    pub train_doc_tokens: usize,
    /// Open-class stems in the lexicon, split across nouns, names, verbs,
    /// adjectives and adverbs.
    pub lexicon_words: usize,
    pub motifs_per_doc: usize,
    /// Probability that a sentence is a motif repeat.
    pub motif_rate: f64,
    /// Probability that an open-class slot draws from the document topic.
    pub topic_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 17,
            docs: 20,
            doc_tokens: 10_000,
            train_docs: 10,
            train_doc_tokens: 10_000,
            lexicon_words: 100,
            motifs_per_doc: 20,
            motif_rate: 0.5,
            topic_rate: 0.9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthDoc {
    pub doc_id: String,
    pub text: String,
    pub tags: Vec<TaggedWord>,
    pub tokens: usize,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub vocab: Vocabulary,
    pub docs: Vec<SynthDoc>,
    pub train: Vec<SynthDoc>,
}

/// Where [`SynthCorpus::write`] put things.
#[derive(Debug, Clone)]
pub struct SynthPaths {
    pub vocab: PathBuf,
    pub corpus: PathBuf,
    pub train: PathBuf,
    pub tags: PathBuf,
}

const CONSONANTS: &[char] = &['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z'];
const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];
const SUFFIXES: &[&str] = &["s", "ed", "ly", "ous", "ful", "ive"];
const PUNCT: &[&str] = &[".", ","];

const DT: &[&str] = &["the", "a", "this", "that"];
const IN: &[&str] = &["of", "in", "with", "for", "on", "by", "from", "at"];
const CC: &[&str] = &["and", "but", "or"];
const PRP: &[&str] = &["he", "she", "they", "we", "it"];
const MD: &[&str] = &["will", "can", "would"];

const TEMPLATES: &[&str] = &[
    "DT JJ NN VBZ IN DT NN .",
    "NNP VBD RB , CC PRP VBD DT NNS .",
    "DT NN IN NNP VBZ JJ .",
    "PRP VBD DT JJ NN IN DT NN .",
    "DT NNS VBD RB IN NNP .",
    "NNP CC NNP VBD DT NN , IN DT JJ NN .",
    "RB , DT NN VBD TO VB DT NNS .",
    "PRP MD VB DT NN IN NNP .",
    "DT JJ NNS VBD IN DT NN CC VBD RB .",
];

#[derive(Clone, Copy)]
enum Slot {
    Noun,
    Name,
    Verb,
    Adj,
    Adv,
}

struct Lexicon {
    nouns: Vec<String>,
    names: Vec<String>,
    verbs: Vec<String>,
    adjs: Vec<String>,
    advs: Vec<String>,
}

impl Lexicon {
    fn list(&self, slot: Slot) -> &[String] {
        match slot {
            Slot::Noun => &self.nouns,
            Slot::Name => &self.names,
            Slot::Verb => &self.verbs,
            Slot::Adj => &self.adjs,
            Slot::Adv => &self.advs,
        }
    }
}

fn syllable(rng: &mut ChaCha8Rng) -> String {
    let c = CONSONANTS[rng.gen_range(0..CONSONANTS.len())];
    let v = VOWELS[rng.gen_range(0..VOWELS.len())];
    format!("{c}{v}")
}

fn stems(rng: &mut ChaCha8Rng, n: usize, taken: &mut Vec<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let len = rng.gen_range(1..=3);
        let s: String = (0..len).map(|_| syllable(rng)).collect();
        if !taken.contains(&s) {
            taken.push(s.clone());
            out.push(s);
        }
    }
    out
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

fn lexicon(rng: &mut ChaCha8Rng, words: usize) -> Lexicon {
    // shares 10 : 2 : 4 : 3 : 2, at least 3 of each
    let share = |parts: usize| (words * parts / 21).max(3);
    let mut taken = Vec::new();
    let nouns = stems(rng, share(10), &mut taken);
    let names = stems(rng, share(2), &mut taken)
        .iter()
        .map(|s| capitalize(s))
        .collect();
    let verbs = stems(rng, share(4), &mut taken);
    let adjs = stems(rng, share(3), &mut taken)
        .into_iter()
        .enumerate()
        .map(|(i, s)| format!("{s}{}", ["ous", "ful", "ive"][i % 3]))
        .collect();
    let advs = stems(rng, share(2), &mut taken)
        .into_iter()
        .map(|s| format!("{s}ly"))
        .collect();
    Lexicon {
        nouns,
        names,
        verbs,
        adjs,
        advs,
    }
}

fn build_vocab(lex: &Lexicon) -> Result<Vocabulary, CorpusError> {
    let mut entries: Vec<String> = Vec::new();
    for list in [DT, IN, CC, PRP, MD, &["to"], PUNCT, SUFFIXES] {
        entries.extend(list.iter().map(|s| s.to_string()));
    }
    for &c in CONSONANTS {
        for &v in VOWELS {
            entries.push(format!("{c}{v}"));
            entries.push(format!("{}{v}", c.to_ascii_uppercase()));
        }
    }
    // the most frequent noun and verb stems become single tokens
    entries.extend(lex.nouns.iter().take(40).cloned());
    entries.extend(lex.verbs.iter().take(20).cloned());
    entries.sort();
    entries.dedup();
    let mut vocab = Vocabulary::new(entries)?;
    let alphabet: String = ('a'..='z').chain('A'..='Z').collect();
    vocab.ensure_chars(&alphabet);
    vocab.ensure_chars(".,");
    Ok(vocab)
}

/// Topic-specific subset of the lexicon for one document.
struct Topic {
    nouns: Vec<String>,
    names: Vec<String>,
    verbs: Vec<String>,
    adjs: Vec<String>,
    advs: Vec<String>,
}

impl Topic {
    fn draw(rng: &mut ChaCha8Rng, lex: &Lexicon) -> Topic {
        let mut pick = |v: &[String], n: usize| v.choose_multiple(rng, n).cloned().collect();
        Topic {
            nouns: pick(&lex.nouns, 12),
            names: pick(&lex.names, 4),
            verbs: pick(&lex.verbs, 8),
            adjs: pick(&lex.adjs, 6),
            advs: pick(&lex.advs, 4),
        }
    }

    fn list(&self, slot: Slot) -> &[String] {
        match slot {
            Slot::Noun => &self.nouns,
            Slot::Name => &self.names,
            Slot::Verb => &self.verbs,
            Slot::Adj => &self.adjs,
            Slot::Adv => &self.advs,
        }
    }
}

struct Generator<'a> {
    lex: &'a Lexicon,
    vocab: &'a Vocabulary,
    /// Zipf weights per open-class list, keyed by list length.
    zipf: HashMap<usize, WeightedIndex<f64>>,
    token_counts: HashMap<String, usize>,
    topic_rate: f64,
}

type Sentence = Vec<TaggedWord>;

impl Generator<'_> {
    fn open_word(&mut self, rng: &mut ChaCha8Rng, topic: Option<&Topic>, slot: Slot) -> String {
        let list = self.lex.list(slot);
        let Some(topic) = topic else {
            // motif words: uniform over the lexicon, so their bigrams are
            // rarely seen outside the motif itself
            return list.choose(rng).expect("lexicon lists are nonempty").clone();
        };
        if rng.gen_bool(self.topic_rate) {
            return topic.list(slot).choose(rng).expect("topic lists are nonempty").clone();
        }
        let dist = self.zipf.entry(list.len()).or_insert_with(|| {
            WeightedIndex::new((0..list.len()).map(|r| 1.0 / (r as f64 + 1.0))).expect("nonempty")
        });
        list[dist.sample(rng)].clone()
    }

    fn sentence(&mut self, rng: &mut ChaCha8Rng, topic: Option<&Topic>) -> Sentence {
        let template = TEMPLATES.choose(rng).expect("templates nonempty");
        template
            .split(' ')
            .map(|tag| {
                let word = match tag {
                    "DT" => DT.choose(rng).unwrap().to_string(),
                    "IN" => IN.choose(rng).unwrap().to_string(),
                    "CC" => CC.choose(rng).unwrap().to_string(),
                    "PRP" => PRP.choose(rng).unwrap().to_string(),
                    "MD" => MD.choose(rng).unwrap().to_string(),
                    "TO" => "to".to_string(),
                    "NN" => self.open_word(rng, topic, Slot::Noun),
                    "NNS" => self.open_word(rng, topic, Slot::Noun) + "s",
                    "NNP" => self.open_word(rng, topic, Slot::Name),
                    "VB" => self.open_word(rng, topic, Slot::Verb),
                    "VBZ" => self.open_word(rng, topic, Slot::Verb) + "s",
                    "VBD" => self.open_word(rng, topic, Slot::Verb) + "ed",
                    "JJ" => self.open_word(rng, topic, Slot::Adj),
                    "RB" => self.open_word(rng, topic, Slot::Adv),
                    p => p.to_string(),
                };
                // sentence-initial capitalization is left out on purpose:
                // it would split the vocabulary of closed-class words
                TaggedWord {
                    word,
                    tag: tag.to_string(),
                }
            })
            .collect()
    }

    fn tokens_in(&mut self, sentence: &Sentence) -> usize {
        sentence
            .iter()
            .map(|w| {
                if let Some(&n) = self.token_counts.get(&w.word) {
                    return n;
                }
                let n = tokenize("", &w.word, self.vocab)
                    .expect("synthetic vocabulary covers the alphabet")
                    .len();
                self.token_counts.insert(w.word.clone(), n);
                n
            })
            .sum()
    }

    fn document(
        &mut self,
        rng: &mut ChaCha8Rng,
        doc_id: String,
        target_tokens: usize,
        motifs: usize,
        motif_rate: f64,
    ) -> SynthDoc {
        let topic = Topic::draw(rng, self.lex);
        let motif_set: Vec<Sentence> = (0..motifs)
            .map(|_| {
                let mut s = self.sentence(rng, None);
                s.extend(self.sentence(rng, None));
                s
            })
            .collect();
        let mut lines = Vec::new();
        let mut tags = Vec::new();
        let mut tokens = 0;
        while tokens < target_tokens {
            let s = if !motif_set.is_empty() && rng.gen_bool(motif_rate) {
                motif_set.choose(rng).unwrap().clone()
            } else {
                self.sentence(rng, Some(&topic))
            };
            tokens += self.tokens_in(&s);
            lines.push(s.iter().map(|w| w.word.as_str()).collect::<Vec<_>>().join(" "));
            tags.extend(s);
        }
        let mut text = lines.join("\n");
        text.push('\n');
        SynthDoc {
            doc_id,
            text,
            tags,
            tokens,
        }
    }
}

/// Generates a corpus; identical configs give identical output.
pub fn generate(config: &SynthConfig) -> Result<SynthCorpus, CorpusError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let lex = lexicon(&mut rng, config.lexicon_words);
    let vocab = build_vocab(&lex)?;
    let mut gen = Generator {
        lex: &lex,
        vocab: &vocab,
        zipf: HashMap::new(),
        token_counts: HashMap::new(),
        topic_rate: config.topic_rate,
    };
    // separate streams so the analysis corpus does not shift when the
    // training corpus is resized
    let mut doc_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0001);
    let docs = (0..config.docs)
        .map(|i| {
            gen.document(
                &mut doc_rng,
                format!("doc{i:03}"),
                config.doc_tokens,
                config.motifs_per_doc,
                config.motif_rate,
            )
        })
        .collect();
    let mut train_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0002);
    let train = (0..config.train_docs)
        .map(|i| {
            gen.document(
                &mut train_rng,
                format!("train{i:03}"),
                config.train_doc_tokens,
                config.motifs_per_doc,
                config.motif_rate,
            )
        })
        .collect();
    Ok(SynthCorpus { vocab, docs, train })
}

impl SynthCorpus {
    /// Writes `vocab.txt`, `corpus/<id>.txt`, `train/<id>.txt` and
    /// `corpus.tags` (tags for the analysis documents in id order).
    pub fn write(&self, dir: &Path) -> std::io::Result<SynthPaths> {
        let paths = SynthPaths {
            vocab: dir.join("vocab.txt"),
            corpus: dir.join("corpus"),
            train: dir.join("train"),
            tags: dir.join("corpus.tags"),
        };
        std::fs::create_dir_all(&paths.corpus)?;
        std::fs::create_dir_all(&paths.train)?;
        self.vocab
            .write(std::io::BufWriter::new(std::fs::File::create(&paths.vocab)?))?;
        for (sub, docs) in [(&paths.corpus, &self.docs), (&paths.train, &self.train)] {
            for d in docs {
                std::fs::write(sub.join(format!("{}.txt", d.doc_id)), &d.text)?;
            }
        }
        let mut tags = std::io::BufWriter::new(std::fs::File::create(&paths.tags)?);
        for (n, d) in self.docs.iter().enumerate() {
            if n > 0 {
                writeln!(tags)?;
            }
            for t in &d.tags {
                writeln!(tags, "{}\t{}", t.word, t.tag)?;
            }
        }
        tags.flush()?;
        Ok(paths)
    }
}
