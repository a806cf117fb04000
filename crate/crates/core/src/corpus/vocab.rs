use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::CorpusError;
use crate::TokenId;

/// Dense, bijective mapping between token strings and ids `0..len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<String>,
    ids: HashMap<String, TokenId>,
    max_chars: usize,
}

impl Vocabulary {
    pub fn new<I, S>(entries: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocabulary {
            entries: Vec::new(),
            ids: HashMap::new(),
            max_chars: 0,
        };
        for (line, entry) in entries.into_iter().enumerate() {
            let entry = entry.into();
            if entry.is_empty() || entry.chars().any(char::is_whitespace) {
                return Err(CorpusError::InvalidEntry { line: line + 1 });
            }
            if vocab.ids.contains_key(&entry) {
                return Err(CorpusError::DuplicateEntry(entry));
            }
            vocab.push(entry);
        }
        Ok(vocab)
    }

    /// Reads one token per line; the line number (0-based) is the id.
    pub fn read<R: Read>(reader: R) -> Result<Self, CorpusError> {
        let mut lines = Vec::new();
        for line in BufReader::new(reader).lines() {
            let line = line?;
            let line = line.strip_suffix('\r').unwrap_or(&line).to_string();
            lines.push(line);
        }
        // tolerate a trailing blank line
        while lines.last().is_some_and(|l| l.is_empty()) {
            lines.pop();
        }
        Self::new(lines)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        Self::read(std::fs::File::open(path)?)
    }

    pub fn write<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        for entry in &self.entries {
            writeln!(writer, "{entry}")?;
        }
        Ok(())
    }

    fn push(&mut self, entry: String) -> TokenId {
        let id = self.entries.len() as TokenId;
        self.max_chars = self.max_chars.max(entry.chars().count());
        self.ids.insert(entry.clone(), id);
        self.entries.push(entry);
        id
    }

    /// Appends a single-character fallback entry for every non-whitespace
    /// character of `text` not already present. Returns how many were added.
    pub fn ensure_chars(&mut self, text: &str) -> usize {
        let mut added = 0;
        let mut buf = [0u8; 4];
        for ch in text.chars().filter(|c| !c.is_whitespace()) {
            let s: &str = ch.encode_utf8(&mut buf);
            if !self.ids.contains_key(s) {
                self.push(s.to_string());
                added += 1;
            }
        }
        added
    }

    /// True when every non-whitespace character of `text` has an entry.
    pub fn covers(&self, text: &str) -> bool {
        let mut buf = [0u8; 4];
        text.chars()
            .filter(|c| !c.is_whitespace())
            .all(|ch| self.ids.contains_key(&*ch.encode_utf8(&mut buf)))
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.entries.get(id as usize).map(String::as_str)
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Length in characters of the longest entry.
    pub fn max_token_chars(&self) -> usize {
        self.max_chars
    }

    /// Hex SHA-256 over the newline-terminated entries, in id order.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for entry in &self.entries {
            hasher.update(entry.as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}
