//! Session persistence.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::key_hash;
use crate::fsm::StateId;
use crate::transcript::{SessionContext, Transcript};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub key: String,
    pub cursor: StateId,
    pub transcript: Transcript,
    pub context: SessionContext,
    /// Seconds since the Unix epoch.
    pub updated_at: u64,
}

#[derive(Debug, Error)]
pub enum SessionStoreError {
    #[error("session store i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("session record: {0}")]
    Json(#[from] serde_json::Error),
}

pub trait SessionStore: Send + Sync {
    fn load(&self, key: &str) -> Result<Option<SessionRecord>, SessionStoreError>;
    fn save(&self, record: &SessionRecord) -> Result<(), SessionStoreError>;
}

#[derive(Debug, Default)]
pub struct MemorySessionStore {
    records: Mutex<HashMap<String, SessionRecord>>,
}

impl MemorySessionStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SessionStore for MemorySessionStore {
    fn load(&self, key: &str) -> Result<Option<SessionRecord>, SessionStoreError> {
        Ok(self.records.lock().unwrap_or_else(|e| e.into_inner()).get(key).cloned())
    }

    fn save(&self, record: &SessionRecord) -> Result<(), SessionStoreError> {
        self.records.lock().unwrap_or_else(|e| e.into_inner()).insert(record.key.clone(), record.clone());
        Ok(())
    }
}

/// One JSON file per session, named by the hash of its key. Writes go to a
/// temporary file that is then renamed over the record.
#[derive(Debug, Clone)]
pub struct FileSessionStore {
    dir: PathBuf,
}

impl FileSessionStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, SessionStoreError> {
        std::fs::create_dir_all(dir.as_ref())?;
        Ok(Self { dir: dir.as_ref().to_path_buf() })
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{}.json", key_hash(key)))
    }
}

impl SessionStore for FileSessionStore {
    fn load(&self, key: &str) -> Result<Option<SessionRecord>, SessionStoreError> {
        match std::fs::read(self.path(key)) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn save(&self, record: &SessionRecord) -> Result<(), SessionStoreError> {
        let path = self.path(&record.key);
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_vec(record)?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(key: &str) -> SessionRecord {
        let mut transcript = Transcript::new();
        transcript.push_system("What's bothering you?");
        SessionRecord { key: key.into(), cursor: "Initialization".into(), transcript, context: Default::default(), updated_at: 1 }
    }

    #[test]
    fn file_store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileSessionStore::open(dir.path().join("sessions")).unwrap();
        assert!(store.load("a").unwrap().is_none());
        store.save(&record("a")).unwrap();
        assert_eq!(store.load("a").unwrap(), Some(record("a")));
        assert!(store.load("b").unwrap().is_none());
    }

    #[test]
    fn memory_store_round_trip() {
        let store = MemorySessionStore::new();
        store.save(&record("a")).unwrap();
        assert_eq!(store.load("a").unwrap(), Some(record("a")));
        assert_eq!(store.len(), 1);
    }
}
