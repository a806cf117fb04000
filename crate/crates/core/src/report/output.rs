use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use super::ReportError;

/// Machine-readable warnings collected during one command.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct RunLog {
    entries: Vec<Value>,
}

impl RunLog {
    pub fn warn(&mut self, event: &str, detail: Value) {
        log::debug!("{event}: {detail}");
        self.entries.push(json!({ "level": "warn", "event": event, "detail": detail }));
    }

    pub fn info(&mut self, event: &str, detail: Value) {
        log::info!("{event}: {detail}");
        self.entries.push(json!({ "level": "info", "event": event, "detail": detail }));
    }

    pub fn entries(&self) -> &[Value] {
        &self.entries
    }

    pub fn warnings(&self) -> usize {
        self.entries.iter().filter(|e| e["level"] == "warn").count()
    }

    /// Writes `dir/logs/<name>.jsonl`, replacing any earlier log.
    pub fn write(&self, out: &Path, name: &str) -> Result<(), ReportError> {
        let dir = out.join("logs");
        std::fs::create_dir_all(&dir).map_err(ReportError::io(&dir))?;
        let path = dir.join(format!("{name}.jsonl"));
        let mut buf = Vec::new();
        for e in &self.entries {
            serde_json::to_writer(&mut buf, e).expect("log entries serialize");
            buf.push(b'\n');
        }
        std::fs::write(&path, buf).map_err(ReportError::io(&path))
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ReportError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(ReportError::io(dir))?;
    }
    std::fs::write(path, bytes).map_err(ReportError::io(path))
}

/// CSV with a leading `# config_hash=` comment line.
pub(crate) fn csv_bytes(
    config_hash: &str,
    header: &[&str],
    rows: &[Vec<String>],
) -> Vec<u8> {
    let mut buf = Vec::new();
    writeln!(buf, "# config_hash={config_hash}").expect("write to vec");
    let mut w = csv::WriterBuilder::new().from_writer(&mut buf);
    w.write_record(header).expect("write to vec");
    for r in rows {
        w.write_record(r).expect("write to vec");
    }
    w.flush().expect("write to vec");
    drop(w);
    buf
}

pub(crate) fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut buf = serde_json::to_vec_pretty(value).expect("report serializes");
    buf.push(b'\n');
    buf
}

/// Shortest round-trip form, switching to exponent notation for very
/// small or large magnitudes.
pub(crate) fn num(v: f64) -> String {
    format!("{v:?}")
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
