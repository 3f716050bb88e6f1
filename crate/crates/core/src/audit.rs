//! Per-turn audit log: one JSON object per line.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    /// Seconds since the Unix epoch.
    pub ts: u64,
    /// Hex SHA-256 of the session key; raw identifiers are never logged.
    pub key_hash: String,
    pub turn: usize,
    /// States visited during the turn, in order.
    pub state_path: Vec<String>,
    pub final_state: String,
    pub verdicts: BTreeMap<String, bool>,
    pub result_count: usize,
}

pub fn key_hash(key: &str) -> String {
    Sha256::digest(key.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub trait AuditSink: Send + Sync {
    fn record(&self, record: &AuditRecord);
}

/// Discards records.
#[derive(Debug, Default)]
pub struct NullAudit;

impl AuditSink for NullAudit {
    fn record(&self, _: &AuditRecord) {}
}

/// Keeps records in memory.
#[derive(Debug, Default)]
pub struct MemoryAudit {
    records: Mutex<Vec<AuditRecord>>,
}

impl MemoryAudit {
    pub fn records(&self) -> Vec<AuditRecord> {
        self.records.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl AuditSink for MemoryAudit {
    fn record(&self, record: &AuditRecord) {
        self.records.lock().unwrap_or_else(|e| e.into_inner()).push(record.clone());
    }
}

/// Appends JSON lines to a file.
#[derive(Debug)]
pub struct FileAudit {
    file: Mutex<File>,
}

impl FileAudit {
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self { file: Mutex::new(OpenOptions::new().create(true).append(true).open(path)?) })
    }
}

impl AuditSink for FileAudit {
    fn record(&self, record: &AuditRecord) {
        let line = match serde_json::to_string(record) {
            Ok(line) => line,
            Err(err) => {
                log::error!("audit record not serializable: {err}");
                return;
            }
        };
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        if let Err(err) = writeln!(file, "{line}").and_then(|_| file.flush()) {
            log::error!("audit write failed: {err}");
        }
    }
}
