use std::io::{BufRead, BufReader, Read};

use serde::{Deserialize, Serialize};

use super::{CorpusError, Document};

/// Coarse part-of-speech class of a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosClass {
    Noun,
    Verb,
    Adj,
    Adv,
    Closed,
    Other,
}

impl PosClass {
    pub const ALL: [PosClass; 6] = [
        PosClass::Noun,
        PosClass::Verb,
        PosClass::Adj,
        PosClass::Adv,
        PosClass::Closed,
        PosClass::Other,
    ];

    /// Open-class (content word) classes.
    pub fn is_content(self) -> bool {
        matches!(
            self,
            PosClass::Noun | PosClass::Verb | PosClass::Adj | PosClass::Adv
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PosClass::Noun => "noun",
            PosClass::Verb => "verb",
            PosClass::Adj => "adj",
            PosClass::Adv => "adv",
            PosClass::Closed => "closed",
            PosClass::Other => "other",
        }
    }
}

impl std::fmt::Display for PosClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Maps a Penn Treebank tag (including the CoreNLP bracket and punctuation
/// variants) to its class. `None` for tags outside the set.
pub fn lookup_penn(tag: &str) -> Option<PosClass> {
    use PosClass::*;
    let class = match tag {
        "NN" | "NNS" | "NNP" | "NNPS" => Noun,
        "VB" | "VBD" | "VBG" | "VBN" | "VBP" | "VBZ" => Verb,
        "JJ" | "JJR" | "JJS" => Adj,
        "RB" | "RBR" | "RBS" => Adv,
        "CC" | "DT" | "EX" | "IN" | "MD" | "PDT" | "POS" | "PRP" | "PRP$" | "RP" | "TO"
        | "WDT" | "WP" | "WP$" | "WRB" => Closed,
        // numbers, symbols, foreign words, interjections, list markers
        "CD" | "SYM" | "FW" | "UH" | "LS" | "ADD" | "AFX" | "GW" | "NFP" | "XX" => Other,
        "." | "," | ":" | "``" | "''" | "\"" | "'" | "`" | "#" | "$" | "(" | ")" | "-LRB-"
        | "-RRB-" | "-LCB-" | "-RCB-" | "-LSB-" | "-RSB-" | "HYPH" => Other,
        _ => return None,
    };
    Some(class)
}

/// Total classification: unknown tags fall back to [`PosClass::Other`].
pub fn classify_pos(tag: &str) -> PosClass {
    lookup_penn(tag).unwrap_or(PosClass::Other)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedWord {
    pub word: String,
    pub tag: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagReport {
    pub words: usize,
    /// Tags outside the Penn set, classified as `other`.
    pub unknown_tags: usize,
}

/// Parses `word<TAB>tag` lines; blank lines separate documents.
pub fn read_tag_file<R: Read>(reader: R) -> Result<Vec<Vec<TaggedWord>>, CorpusError> {
    let mut docs = Vec::new();
    let mut current = Vec::new();
    for (n, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            if !current.is_empty() {
                docs.push(std::mem::take(&mut current));
            }
            continue;
        }
        let (word, tag) = line.split_once('\t').ok_or_else(|| CorpusError::TagFormat {
            line: n + 1,
            detail: "expected word<TAB>tag".into(),
        })?;
        current.push(TaggedWord {
            word: word.to_string(),
            tag: tag.trim().to_string(),
        });
    }
    if !current.is_empty() {
        docs.push(current);
    }
    Ok(docs)
}

/// Gives every token the class of its source word's tag.
pub fn attach_pos_tags(doc: &mut Document, tags: &[TaggedWord]) -> Result<TagReport, CorpusError> {
    for (j, (word, tagged)) in doc.words.iter().zip(tags).enumerate() {
        if *word != tagged.word {
            return Err(CorpusError::TagAlignment {
                index: j,
                detail: format!("document word {word:?}, tag file word {:?}", tagged.word),
            });
        }
    }
    if doc.words.len() != tags.len() {
        return Err(CorpusError::TagAlignment {
            index: doc.words.len().min(tags.len()),
            detail: format!(
                "document has {} words, tag file has {}",
                doc.words.len(),
                tags.len()
            ),
        });
    }
    let mut report = TagReport {
        words: tags.len(),
        unknown_tags: 0,
    };
    let classes: Vec<PosClass> = tags
        .iter()
        .map(|t| {
            lookup_penn(&t.tag).unwrap_or_else(|| {
                report.unknown_tags += 1;
                PosClass::Other
            })
        })
        .collect();
    for (i, &w) in doc.word_index.iter().enumerate() {
        doc.pos_class[i] = classes[w];
    }
    Ok(report)
}

const CLOSED_WORDS: &[&str] = &[
    "a", "about", "above", "after", "against", "all", "although", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "could", "did", "do", "does", "down", "during", "each", "either", "every",
    "for", "from", "had", "has", "have", "he", "her", "hers", "herself", "him", "himself",
    "his", "i", "if", "in", "into", "is", "it", "its", "itself", "may", "me", "might", "mine",
    "must", "my", "myself", "neither", "no", "nor", "of", "off", "on", "onto", "or", "our",
    "ours", "out", "over", "shall", "she", "should", "since", "so", "some", "than", "that",
    "the", "their", "theirs", "them", "themselves", "these", "they", "this", "those", "though",
    "through", "to", "under", "unless", "until", "up", "upon", "us", "was", "we", "were",
    "what", "whatever", "when", "where", "whether", "which", "while", "who", "whom", "whose",
    "why", "will", "with", "within", "without", "would", "yet", "you", "your", "yours",
];

/// Heuristic class for untagged text: closed-class word list, a few suffix
/// rules, default noun. Much coarser than an external tagger.
pub fn fallback_tag(word: &str) -> PosClass {
    if word.chars().all(|c| !c.is_alphabetic()) {
        return PosClass::Other;
    }
    let lower = word.to_lowercase();
    if CLOSED_WORDS.binary_search(&lower.as_str()).is_ok() {
        PosClass::Closed
    } else if lower.len() > 3 && lower.ends_with("ly") {
        PosClass::Adv
    } else if ["ous", "ful", "ive"]
        .iter()
        .any(|s| lower.len() > s.len() + 1 && lower.ends_with(s))
    {
        PosClass::Adj
    } else {
        PosClass::Noun
    }
}

/// Applies [`fallback_tag`] to every word of `doc`.
pub fn tag_with_fallback(doc: &mut Document) {
    let classes: Vec<PosClass> = doc.words.iter().map(|w| fallback_tag(w)).collect();
    for (i, &w) in doc.word_index.iter().enumerate() {
        doc.pos_class[i] = classes[w];
    }
}
