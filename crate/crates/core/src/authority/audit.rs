//! Append-only audit trail, one UTF-8 line per event:
//!
//! ```text
//! 2026-03-01T12:00:00.123Z issue entity=<hex> cells=9 epochs=1 records=9 span=20000..20040 note="survey"
//! ```

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;
use std::sync::Mutex;

use chrono::{SecondsFormat, Utc};

use super::Span;
use crate::keystore::EntityId;

#[derive(Debug, Clone)]
pub struct AuditEntry {
    pub action: &'static str,
    pub entity: EntityId,
    pub cells: usize,
    pub epochs: usize,
    pub records: usize,
    pub span: Span,
    /// Free text; quoted and escaped so the entry stays on one line.
    pub note: String,
}

enum Sink {
    File(File),
    Memory(Vec<String>),
}

pub struct AuditLog {
    sink: Mutex<Sink>,
}

impl AuditLog {
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            sink: Mutex::new(Sink::File(file)),
        })
    }

    pub fn in_memory() -> Self {
        Self {
            sink: Mutex::new(Sink::Memory(Vec::new())),
        }
    }

    pub fn record(&self, e: &AuditEntry) -> io::Result<()> {
        self.append(&format!(
            "{} entity={} cells={} epochs={} records={} span={}..{} note={}",
            e.action,
            e.entity,
            e.cells,
            e.epochs,
            e.records,
            e.span.start_day,
            e.span.end_day,
            quote(&e.note)
        ))
    }

    /// Writes `body` prefixed with the current UTC time.
    pub fn append(&self, body: &str) -> io::Result<()> {
        let line = format!(
            "{} {}",
            Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            body.replace(['\n', '\r'], " ")
        );
        let mut sink = self.sink.lock().expect("audit lock poisoned");
        match &mut *sink {
            Sink::File(f) => {
                f.write_all(line.as_bytes())?;
                f.write_all(b"\n")?;
                f.flush()
            }
            Sink::Memory(lines) => {
                lines.push(line);
                Ok(())
            }
        }
    }

    /// Lines held by an in-memory log; empty for file-backed logs.
    pub fn lines(&self) -> Vec<String> {
        match &*self.sink.lock().expect("audit lock poisoned") {
            Sink::Memory(lines) => lines.clone(),
            Sink::File(_) => Vec::new(),
        }
    }
}

pub(crate) fn quote(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}
