//! Newline-delimited JSON interchange for prediction records.
//!
//! ```text
//! {"schema_version":1,"vocab_size":32000,"tokenizer_name":"..."}
//! {"doc_id":"d0","k":2048,"token_index":0,"context_len":0,"log_prob":-3.2,...}
//! ...
//! ```
//!
//! The first line is the header; every following line is one
//! [`PredictionRecord`]. Records are validated on load.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LogProbProvider, PredictionRecord, ProviderError, Query};

pub const SCHEMA_VERSION: u32 = 1;

/// Relative slack for the `max_prob >= exp(log_prob)` and entropy bounds.
const VALIDATION_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterchangeHeader {
    pub schema_version: u32,
    pub vocab_size: usize,
    pub tokenizer_name: String,
    /// Hash of the sweep configuration that produced the records, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl InterchangeHeader {
    pub fn new(vocab_size: usize, tokenizer_name: impl Into<String>) -> Self {
        InterchangeHeader {
            schema_version: SCHEMA_VERSION,
            vocab_size,
            tokenizer_name: tokenizer_name.into(),
            config_hash: None,
        }
    }
}

pub fn write_records<'a, W, I>(
    mut writer: W,
    header: &InterchangeHeader,
    records: I,
) -> Result<(), ProviderError>
where
    W: Write,
    I: IntoIterator<Item = &'a PredictionRecord>,
{
    serde_json::to_writer(&mut writer, header)?;
    writer.write_all(b"\n")?;
    for record in records {
        serde_json::to_writer(&mut writer, record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

fn validate(record: &PredictionRecord, vocab_size: usize) -> Result<(), String> {
    let lp = record.log_prob;
    if !lp.is_finite() || lp > 0.0 {
        return Err(format!("log_prob {lp} is not a finite value <= 0"));
    }
    let p = lp.exp();
    if !(0.0..=1.0).contains(&record.max_prob) {
        return Err(format!("max_prob {} outside [0, 1]", record.max_prob));
    }
    if record.max_prob < p * (1.0 - VALIDATION_SLACK) {
        return Err(format!(
            "max_prob {} below exp(log_prob) = {p}",
            record.max_prob
        ));
    }
    let ln_v = (vocab_size.max(1) as f64).ln();
    if !(record.entropy >= 0.0 && record.entropy <= ln_v + VALIDATION_SLACK * (1.0 + ln_v)) {
        return Err(format!("entropy {} outside [0, ln V]", record.entropy));
    }
    if record.argmax_id as usize >= vocab_size {
        return Err(format!("argmax_id {} outside vocabulary", record.argmax_id));
    }
    if record.context_len > record.token_index {
        return Err(format!(
            "context_len {} exceeds token_index {}",
            record.context_len, record.token_index
        ));
    }
    Ok(())
}

/// Reads and validates one interchange stream. `origin` labels errors.
pub fn read_records<R: Read>(
    reader: R,
    origin: &str,
) -> Result<(InterchangeHeader, Vec<PredictionRecord>), ProviderError> {
    let invalid = |line: usize, detail: String| ProviderError::Invalid {
        path: origin.to_string(),
        line,
        detail,
    };
    let mut lines = BufReader::new(reader).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| invalid(1, "missing header line".into()))??;
    let header: InterchangeHeader =
        serde_json::from_str(&header_line).map_err(|e| invalid(1, format!("bad header: {e}")))?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(invalid(
            1,
            format!("unsupported schema_version {}", header.schema_version),
        ));
    }
    let mut records = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord =
            serde_json::from_str(&line).map_err(|e| invalid(n + 2, e.to_string()))?;
        validate(&record, header.vocab_size).map_err(|d| invalid(n + 2, d))?;
        records.push(record);
    }
    Ok((header, records))
}

type Key = (String, usize, usize);

/// Pre-extracted records keyed by `(doc_id, K, token_index)`.
#[derive(Debug, Clone)]
pub struct RecordStore {
    header: InterchangeHeader,
    records: HashMap<Key, PredictionRecord>,
}

impl RecordStore {
    /// Opens one interchange file, or every `*.ndjson` / `*.jsonl` file in
    /// a directory (sorted by name). All files must agree on vocab size.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, ProviderError> {
        let path = path.as_ref();
        let files: Vec<PathBuf> = if path.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| {
                    matches!(
                        p.extension().and_then(|e| e.to_str()),
                        Some("ndjson" | "jsonl")
                    )
                })
                .collect();
            files.sort();
            files
        } else {
            vec![path.to_path_buf()]
        };
        let mut store: Option<RecordStore> = None;
        for file in files {
            let origin = file.display().to_string();
            let (header, records) = read_records(std::fs::File::open(&file)?, &origin)?;
            let store = store.get_or_insert_with(|| RecordStore {
                header: header.clone(),
                records: HashMap::new(),
            });
            if header.vocab_size != store.header.vocab_size {
                return Err(ProviderError::Invalid {
                    path: origin,
                    line: 1,
                    detail: format!(
                        "vocab_size {} disagrees with {}",
                        header.vocab_size, store.header.vocab_size
                    ),
                });
            }
            store.extend(records)?;
        }
        store.ok_or_else(|| ProviderError::Invalid {
            path: path.display().to_string(),
            line: 0,
            detail: "no interchange files found".into(),
        })
    }

    pub fn from_records(
        header: InterchangeHeader,
        records: Vec<PredictionRecord>,
    ) -> Result<Self, ProviderError> {
        let mut store = RecordStore {
            header,
            records: HashMap::new(),
        };
        store.extend(records)?;
        Ok(store)
    }

    fn extend(&mut self, records: Vec<PredictionRecord>) -> Result<(), ProviderError> {
        for r in records {
            let key = (r.doc_id.clone(), r.k, r.token_index);
            if self.records.contains_key(&key) {
                return Err(ProviderError::DuplicateKey {
                    doc_id: key.0,
                    k: key.1,
                    token_index: key.2,
                });
            }
            self.records.insert(key, r);
        }
        Ok(())
    }

    pub fn header(&self) -> &InterchangeHeader {
        &self.header
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(
        &self,
        doc_id: &str,
        k: usize,
        token_index: usize,
    ) -> Result<&PredictionRecord, ProviderError> {
        self.records
            .get(&(doc_id.to_string(), k, token_index))
            .ok_or_else(|| ProviderError::NotFound {
                doc_id: doc_id.to_string(),
                k,
                token_index,
            })
    }
}

impl LogProbProvider for RecordStore {
    /// The stored record, provided it was scored from a context of the
    /// same length as the query's; a mismatch means the records came from
    /// a different chunk layout.
    fn score(&self, q: &Query<'_>) -> Result<PredictionRecord, ProviderError> {
        let r = self.get(q.doc_id, q.k, q.token_index)?;
        if r.context_len != q.context.len() {
            return Err(ProviderError::ContextMismatch {
                doc_id: q.doc_id.to_string(),
                k: q.k,
                token_index: q.token_index,
                stored: r.context_len,
                expected: q.context.len(),
            });
        }
        Ok(r.clone())
    }

    fn vocab_size(&self) -> usize {
        self.header.vocab_size
    }
}
