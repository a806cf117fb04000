use super::{CorpusError, PosClass, Vocabulary};
use crate::TokenId;

/// One text as a token sequence, with every token tied back to its word.
///
/// Built once by [`tokenize`] and treated as read-only afterwards, apart
/// from POS attachment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub tokens: Vec<TokenId>,
    pub token_strings: Vec<String>,
    /// Source word of each token; non-decreasing.
    pub word_index: Vec<usize>,
    /// 0-based position of each token inside its word.
    pub within_word_pos: Vec<usize>,
    pub pos_class: Vec<PosClass>,
    /// Words after whitespace and punctuation splitting.
    pub words: Vec<String>,
    /// Whether each word was preceded by whitespace in the source.
    pub space_before: Vec<bool>,
}

impl Document {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_first_subword(&self, i: usize) -> bool {
        self.within_word_pos[i] == 0
    }

    /// Rebuilds the whitespace-normalized source: words glued to their
    /// predecessor unless whitespace separated them, single spaces otherwise.
    pub fn detokenize(&self) -> String {
        let mut words: Vec<String> = vec![String::new(); self.words.len()];
        for (tok, &w) in self.token_strings.iter().zip(&self.word_index) {
            words[w].push_str(tok);
        }
        let mut out = String::new();
        for (j, word) in words.iter().enumerate() {
            if j > 0 && self.space_before[j] {
                out.push(' ');
            }
            out.push_str(word);
        }
        out
    }

    /// Tokens belonging to word `j`, as a half-open range.
    pub fn word_span(&self, j: usize) -> std::ops::Range<usize> {
        let start = self.word_index.partition_point(|&w| w < j);
        let end = self.word_index.partition_point(|&w| w <= j);
        start..end
    }
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric()
}

/// Splits whitespace-delimited chunks into words, giving each punctuation
/// character a word of its own.
fn split_words(raw: &str) -> Vec<(String, bool)> {
    let mut words = Vec::new();
    for chunk in raw.split_whitespace() {
        let mut first = true;
        let mut current = String::new();
        for c in chunk.chars() {
            if is_punct(c) {
                if !current.is_empty() {
                    words.push((std::mem::take(&mut current), first));
                    first = false;
                }
                words.push((c.to_string(), first));
                first = false;
            } else {
                current.push(c);
            }
        }
        if !current.is_empty() {
            words.push((current, first));
        }
    }
    words
}

/// Greedy longest-prefix segmentation of one word.
fn segment<'w>(word: &'w str, vocab: &Vocabulary) -> Result<Vec<(&'w str, TokenId)>, CorpusError> {
    let bounds: Vec<usize> = word
        .char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(word.len()))
        .collect();
    let max = vocab.max_token_chars().max(1);
    let mut pieces = Vec::new();
    let mut at = 0; // index into bounds
    while at + 1 < bounds.len() {
        let longest = (bounds.len() - 1 - at).min(max);
        let hit = (1..=longest).rev().find_map(|n| {
            let piece = &word[bounds[at]..bounds[at + n]];
            vocab.id(piece).map(|id| (n, piece, id))
        });
        match hit {
            Some((n, piece, id)) => {
                pieces.push((piece, id));
                at += n;
            }
            None => {
                let ch = word[bounds[at]..].chars().next().unwrap_or_default();
                return Err(CorpusError::UncoveredChar {
                    word: word.to_string(),
                    ch,
                });
            }
        }
    }
    Ok(pieces)
}

/// Tokenizes `raw_text` into a [`Document`].
///
/// Words are maximal non-whitespace runs with punctuation split off; each
/// word is segmented by greedy longest-prefix match against `vocab`. All
/// tokens start out as [`PosClass::Other`].
pub fn tokenize(
    doc_id: impl Into<String>,
    raw_text: &str,
    vocab: &Vocabulary,
) -> Result<Document, CorpusError> {
    let mut doc = Document {
        doc_id: doc_id.into(),
        tokens: Vec::new(),
        token_strings: Vec::new(),
        word_index: Vec::new(),
        within_word_pos: Vec::new(),
        pos_class: Vec::new(),
        words: Vec::new(),
        space_before: Vec::new(),
    };
    for (j, (word, space)) in split_words(raw_text).into_iter().enumerate() {
        for (k, (piece, id)) in segment(&word, vocab)?.into_iter().enumerate() {
            doc.tokens.push(id);
            doc.token_strings.push(piece.to_string());
            doc.word_index.push(j);
            doc.within_word_pos.push(k);
            doc.pos_class.push(PosClass::Other);
        }
        doc.words.push(word);
        doc.space_before.push(space);
    }
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chars_vocab(extra: &[&str], text: &str) -> Vocabulary {
        let mut v = Vocabulary::new(extra.iter().copied()).unwrap();
        v.ensure_chars(text);
        v
    }

    #[test]
    fn single_exact_match() {
        let v = Vocabulary::new(["cat"]).unwrap();
        let d = tokenize("d", "cat", &v).unwrap();
        assert_eq!(d.tokens, vec![0]);
        assert_eq!(d.within_word_pos, vec![0]);
    }

    #[test]
    fn greedy_longest_prefix_splits_compound() {
        let v = Vocabulary::new(["cat", "fish"]).unwrap();
        let d = tokenize("d", "catfish", &v).unwrap();
        assert_eq!(d.token_strings, vec!["cat", "fish"]);
        assert_eq!(d.word_index, vec![0, 0]);
        assert_eq!(d.within_word_pos, vec![0, 1]);
    }

    #[test]
    fn greedy_prefers_longest_even_when_it_strands_a_char() {
        // "cats" + "h" rather than "cat" + "sh"
        let v = chars_vocab(&["cat", "cats", "sh"], "catsh");
        let d = tokenize("d", "catsh", &v).unwrap();
        assert_eq!(d.token_strings, vec!["cats", "h"]);
    }

    #[test]
    fn whitespace_split_char_vocab() {
        let v = chars_vocab(&[], "ab");
        let d = tokenize("d", "a b", &v).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.word_index, vec![0, 1]);
        assert_eq!(d.within_word_pos, vec![0, 0]);
    }

    #[test]
    fn punctuation_becomes_its_own_word() {
        let v = chars_vocab(&["dog"], "dog.,");
        let d = tokenize("d", "dog., dog", &v).unwrap();
        assert_eq!(d.words, vec!["dog", ".", ",", "dog"]);
        assert_eq!(d.space_before, vec![true, false, false, true]);
        assert_eq!(d.detokenize(), "dog., dog");
    }

    #[test]
    fn empty_input_is_empty_document() {
        let v = Vocabulary::new(["a"]).unwrap();
        let d = tokenize("d", "  \n ", &v).unwrap();
        assert!(d.is_empty());
        assert!(d.words.is_empty());
    }

    #[test]
    fn uncovered_character_is_reported() {
        let v = Vocabulary::new(["a"]).unwrap();
        match tokenize("d", "ab", &v) {
            Err(CorpusError::UncoveredChar { ch, .. }) => assert_eq!(ch, 'b'),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn word_span_covers_word_tokens() {
        let v = chars_vocab(&["ca"], "cat dog");
        let d = tokenize("d", "cat dog", &v).unwrap();
        assert_eq!(d.word_span(0), 0..2);
        assert_eq!(d.word_span(1), 2..5);
    }

    proptest! {
        #[test]
        fn alignment_invariants_and_roundtrip(text in "[a-d .,!]{0,60}") {
            let v = chars_vocab(&["ab", "abc", "cd", "dd", "a."], &text);
            let d = tokenize("p", &text, &v).unwrap();
            // word_index non-decreasing; within_word_pos resets exactly at word change
            for i in 1..d.len() {
                prop_assert!(d.word_index[i] >= d.word_index[i - 1]);
                let changed = d.word_index[i] != d.word_index[i - 1];
                prop_assert_eq!(changed, d.within_word_pos[i] == 0);
            }
            if !d.is_empty() {
                prop_assert_eq!(d.within_word_pos[0], 0);
            }
            // token strings concatenate back to the source words
            for (j, w) in d.words.iter().enumerate() {
                let joined: String = d.word_span(j).map(|i| d.token_strings[i].as_str()).collect();
                prop_assert_eq!(&joined, w);
            }
            let normalized = text.split_whitespace().collect::<Vec<_>>().join(" ");
            prop_assert_eq!(d.detokenize(), normalized);
            // determinism
            prop_assert_eq!(tokenize("p", &text, &v).unwrap(), d);
        }
    }
}
