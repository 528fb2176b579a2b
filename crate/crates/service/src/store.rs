//! Append-only transcript store: one JSON-lines file per session under the
//! store root, and uploaded images saved content-addressed under `images/`.
//!
//! Every append is a single write of whole lines followed by `fsync`, so a
//! record the service acknowledged is on disk. A crash mid-write can leave a
//! partial last line; it was never acknowledged and is cut off on next load.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use myopia_core::agent::{ChatMessage, ToolTrace};
use myopia_core::Language;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("transcript store I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("session {0} already exists")]
    Exists(String),
    #[error("invalid session id {0:?}")]
    BadId(String),
    #[error("corrupt transcript {path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Entry {
    Created {
        language: Language,
    },
    Message {
        message: ChatMessage,
        /// Present on assistant messages.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        trace: Option<ToolTrace>,
    },
    /// A turn whose provider call failed. The user message is kept for audit
    /// but is not part of the conversation history.
    FailedTurn {
        message: ChatMessage,
        error: String,
        /// Tool results gathered before the provider failed.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        trace: Option<ToolTrace>,
    },
    Deleted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub session_id: String,
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    pub entry: Entry,
}

#[derive(Debug, Clone)]
pub struct TranscriptStore {
    root: PathBuf,
}

pub fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

fn sync_dir(dir: &Path) -> io::Result<()> {
    File::open(dir)?.sync_all()
}

impl TranscriptStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("images"))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, session_id: &str) -> Result<PathBuf, StoreError> {
        if !valid_session_id(session_id) {
            return Err(StoreError::BadId(session_id.to_string()));
        }
        Ok(self.root.join(format!("{session_id}.jsonl")))
    }

    /// Creates the session file holding its `created` record.
    pub fn create(&self, session_id: &str, language: Language, at: DateTime<Utc>) -> Result<TranscriptRecord, StoreError> {
        let path = self.path(session_id)?;
        let record =
            TranscriptRecord { session_id: session_id.to_string(), seq: 0, timestamp: at, entry: Entry::Created { language } };
        let mut f = match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => return Err(StoreError::Exists(session_id.into())),
            Err(e) => return Err(e.into()),
        };
        f.write_all(&encode(&[record.clone()]))?;
        f.sync_all()?;
        sync_dir(&self.root)?;
        Ok(record)
    }

    /// Appends records with one write and syncs before returning.
    pub fn append(&self, records: &[TranscriptRecord]) -> Result<(), StoreError> {
        let Some(first) = records.first() else {
            return Ok(());
        };
        let path = self.path(&first.session_id)?;
        let mut f = OpenOptions::new().append(true).open(&path)?;
        f.write_all(&encode(records))?;
        f.sync_data()?;
        Ok(())
    }

    /// All records of a session, or `None` when it was never created.
    pub fn load(&self, session_id: &str) -> Result<Option<Vec<TranscriptRecord>>, StoreError> {
        let path = self.path(session_id)?;
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let complete = match bytes.iter().rposition(|&b| b == b'\n') {
            Some(i) => i + 1,
            None => 0,
        };
        if complete < bytes.len() {
            tracing::warn!(session_id, dropped = bytes.len() - complete, "cutting partial transcript line");
            let f = OpenOptions::new().write(true).open(&path)?;
            f.set_len(complete as u64)?;
            f.sync_all()?;
        }
        let text = std::str::from_utf8(&bytes[..complete]).map_err(|e| StoreError::Corrupt {
            path: path.clone(),
            line: 0,
            message: e.to_string(),
        })?;
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let rec: TranscriptRecord = serde_json::from_str(line).map_err(|e| StoreError::Corrupt {
                path: path.clone(),
                line: i + 1,
                message: e.to_string(),
            })?;
            out.push(rec);
        }
        Ok(Some(out))
    }

    /// Saves image bytes as `images/<sha256>.<ext>`; identical uploads share one file.
    pub fn put_image(&self, content_hash: &str, extension: &str, bytes: &[u8]) -> Result<PathBuf, StoreError> {
        let dir = self.root.join("images");
        let path = dir.join(format!("{content_hash}.{extension}"));
        if path.exists() {
            return Ok(path);
        }
        let tmp = dir.join(format!(".{content_hash}.{}.tmp", uuid::Uuid::new_v4()));
        {
            let mut f = File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &path)?;
        sync_dir(&dir)?;
        Ok(path)
    }
}

fn encode(records: &[TranscriptRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("records serialize");
        out.push(b'\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(seq: u64, text: &str) -> TranscriptRecord {
        TranscriptRecord {
            session_id: "s1".into(),
            seq,
            timestamp: Utc::now(),
            entry: Entry::Message { message: ChatMessage::user(text, None), trace: None },
        }
    }

    #[test]
    fn create_append_load() {
        let dir = tempfile::tempdir().unwrap();
        let store = TranscriptStore::open(dir.path()).unwrap();
        store.create("s1", Language::En, Utc::now()).unwrap();
        assert!(matches!(store.create("s1", Language::En, Utc::now()), Err(StoreError::Exists(_))));
        store.append(&[msg(1, "a"), msg(2, "b")]).unwrap();
        let recs = store.load("s1").unwrap().unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs.iter().map(|r| r.seq).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(store.load("nope").unwrap(), None);
        assert!(matches!(store.load("../etc/passwd"), Err(StoreError::BadId(_))));
    }

    #[test]
    fn torn_tail_is_cut_and_appends_continue() {
        let dir = tempfile::tempdir().unwrap();
        let store = TranscriptStore::open(dir.path()).unwrap();
        store.create("s1", Language::Zh, Utc::now()).unwrap();
        store.append(&[msg(1, "kept")]).unwrap();
        let path = dir.path().join("s1.jsonl");
        let mut line = encode(&[msg(2, "torn")]);
        line.truncate(line.len() / 2);
        OpenOptions::new().append(true).open(&path).unwrap().write_all(&line).unwrap();

        let recs = store.load("s1").unwrap().unwrap();
        assert_eq!(recs.len(), 2);
        store.append(&[msg(2, "next")]).unwrap();
        let recs = store.load("s1").unwrap().unwrap();
        assert_eq!(recs.len(), 3);
        assert!(matches!(&recs[2].entry, Entry::Message { message, .. } if message.text == "next"));
    }

    #[test]
    fn images_are_content_addressed() {
        let dir = tempfile::tempdir().unwrap();
        let store = TranscriptStore::open(dir.path()).unwrap();
        let a = store.put_image("abc123", "png", b"one").unwrap();
        let b = store.put_image("abc123", "png", b"one").unwrap();
        assert_eq!(a, b);
        assert_eq!(fs::read(a).unwrap(), b"one");
        assert_eq!(fs::read_dir(dir.path().join("images")).unwrap().count(), 1);
    }
}
