//! Binary index file, little-endian:
//!
//! ```text
//! magic "MKDX" | u32 version | u32 dim | u64 entry_count | str fingerprint
//! entry_count × ( str doc_id | u32 chunk_index | u32 token_start | u32 token_end
//!                 | str text | dim × f32 )
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8 bytes. The file carries no
//! timestamp so that identical inputs produce identical bytes; on load the
//! index's creation time is the file's modification time.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use chrono::{DateTime, Utc};

use super::embed::EmbeddingVector;
use super::index::IndexEntry;
use super::{Chunk, KbError, KnowledgeIndex};

pub const MAGIC: [u8; 4] = *b"MKDX";
pub const FORMAT_VERSION: u32 = 1;

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

/// Serializes an index into its on-disk byte form.
pub fn write_index(index: &KnowledgeIndex) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(index.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(index.len() as u64).to_le_bytes());
    put_str(&mut out, index.fingerprint());
    for e in index.entries() {
        put_str(&mut out, &e.chunk.doc_id);
        out.extend_from_slice(&e.chunk.chunk_index.to_le_bytes());
        out.extend_from_slice(&e.chunk.token_start.to_le_bytes());
        out.extend_from_slice(&e.chunk.token_end.to_le_bytes());
        put_str(&mut out, &e.chunk.text);
        for v in e.vector.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], KbError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            KbError::Corrupt(format!("truncated while reading {what} at byte {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, KbError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, KbError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32, KbError> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String, KbError> {
        let len = self.u32(what)? as usize;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| KbError::Corrupt(format!("{what} is not valid UTF-8")))
    }
}

/// Parses the on-disk byte form. Never returns a partially read index.
pub fn read_index(bytes: &[u8], created_at: DateTime<Utc>) -> Result<KnowledgeIndex, KbError> {
    if bytes.len() < 4 {
        return Err(KbError::Corrupt("file shorter than the magic header".into()));
    }
    let found: [u8; 4] = bytes[..4].try_into().unwrap();
    if found != MAGIC {
        return Err(KbError::BadMagic { found });
    }
    let mut r = Reader { buf: bytes, pos: 4 };
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(KbError::UnsupportedVersion { found: version, supported: FORMAT_VERSION });
    }
    let dim = r.u32("dim")? as usize;
    let count = r.u64("entry count")?;
    let fingerprint = r.string("fingerprint")?;

    // Each entry needs at least 20 header bytes plus its vector.
    let min_entry = 20u64 + 4 * dim as u64;
    let remaining = (bytes.len() - r.pos) as u64;
    if count.saturating_mul(min_entry) > remaining {
        return Err(KbError::Corrupt(format!("entry count {count} exceeds file size")));
    }

    let mut entries = Vec::with_capacity(count as usize);
    for i in 0..count {
        let what = format!("entry {i}");
        let doc_id = r.string(&what)?;
        let chunk_index = r.u32(&what)?;
        let token_start = r.u32(&what)?;
        let token_end = r.u32(&what)?;
        if token_end <= token_start {
            return Err(KbError::Corrupt(format!("{what} has an empty token span")));
        }
        let text = r.string(&what)?;
        let values = (0..dim).map(|_| r.f32(&what)).collect::<Result<Vec<_>, _>>()?;
        entries.push(IndexEntry {
            chunk: Chunk { doc_id, chunk_index, token_start, token_end, text },
            vector: EmbeddingVector::from_stored(values),
        });
    }
    if r.pos != bytes.len() {
        return Err(KbError::Corrupt(format!("{} trailing bytes after last entry", bytes.len() - r.pos)));
    }
    KnowledgeIndex::from_entries(dim, fingerprint, entries, created_at)
}

/// Writes to a sibling temp file and renames it into place.
pub fn save_index(index: &KnowledgeIndex, path: &Path) -> Result<(), KbError> {
    let bytes = write_index(index);
    let tmp = path.with_extension("tmp-write");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<KnowledgeIndex, KbError> {
    let bytes = fs::read(path)?;
    let created_at = fs::metadata(path)
        .and_then(|m| m.modified())
        .map(DateTime::<Utc>::from)
        .unwrap_or_else(|_: io::Error| Utc::now());
    read_index(&bytes, created_at)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kbindex::{build_index, retrieve, KnowledgeDocument, MockEmbedder, SourceKind};
    use crate::Language;

    fn sample_index() -> KnowledgeIndex {
        let doc = KnowledgeDocument {
            doc_id: "gl-1".into(),
            title: "t".into(),
            source_kind: SourceKind::Guideline,
            language: Language::En,
            body: "Myopia is common. 近视很常见。 Outdoor time helps children, and atropine slows progression.".into(),
        };
        build_index(&[doc], &MockEmbedder::new(Language::En), 5, 0).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let idx = sample_index();
        assert_eq!(idx.len(), 4, "16 tokens in windows of 5");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb.mkdx");
        save_index(&idx, &path).unwrap();
        let back = load_index(&path).unwrap();
        assert_eq!(back.fingerprint(), idx.fingerprint());
        assert_eq!(back.entries(), idx.entries());
        assert_eq!(write_index(&back), write_index(&idx));
        let m = MockEmbedder::new(Language::En);
        for q in ["atropine", "近视", "outdoor children"] {
            assert_eq!(retrieve(&back, q, 3, &m).unwrap(), retrieve(&idx, q, 3, &m).unwrap());
        }
    }

    #[test]
    fn header_layout() {
        let bytes = write_index(&sample_index());
        assert_eq!(&bytes[..4], b"MKDX");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 64);
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 4);
    }

    #[test]
    fn wrong_magic_is_a_format_error() {
        let mut bytes = write_index(&sample_index());
        bytes[..4].copy_from_slice(b"FAIS");
        assert!(matches!(read_index(&bytes, Utc::now()), Err(KbError::BadMagic { found }) if &found == b"FAIS"));
    }

    #[test]
    fn newer_version_is_unsupported() {
        let mut bytes = write_index(&sample_index());
        bytes[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        assert!(matches!(
            read_index(&bytes, Utc::now()),
            Err(KbError::UnsupportedVersion { found: 2, supported: 1 })
        ));
    }

    #[test]
    fn every_truncation_is_corruption() {
        let bytes = write_index(&sample_index());
        for len in 4..bytes.len() {
            assert!(matches!(read_index(&bytes[..len], Utc::now()), Err(KbError::Corrupt(_))), "len {len}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(read_index(&extra, Utc::now()), Err(KbError::Corrupt(_))));
    }
}
