use std::cmp::Ordering;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{chunk_document, embed, Chunk, EmbeddingProvider, EmbeddingVector, KbError, KnowledgeDocument};

/// Chunks retrieved per query when the caller does not say otherwise.
pub const DEFAULT_K: usize = 4;

const EMBED_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub chunk: Chunk,
    pub vector: EmbeddingVector,
}

/// Exact flat cosine index. Immutable once built; share it behind an `Arc`
/// and swap the whole value to rebuild.
#[derive(Debug, Clone)]
pub struct KnowledgeIndex {
    dim: usize,
    fingerprint: String,
    entries: Vec<IndexEntry>,
    created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub rank: usize,
    pub score: f64,
    /// Position of the entry in ingestion order.
    pub entry: usize,
    pub chunk: Chunk,
}

impl RetrievalHit {
    pub fn citation_tag(&self) -> String {
        self.chunk.citation_tag()
    }
}

impl KnowledgeIndex {
    pub fn empty(dim: usize, fingerprint: impl Into<String>) -> Self {
        Self { dim, fingerprint: fingerprint.into(), entries: Vec::new(), created_at: Utc::now() }
    }

    /// Assembles an index from precomputed entries, checking every vector's dimension.
    pub fn from_entries(
        dim: usize,
        fingerprint: impl Into<String>,
        entries: Vec<IndexEntry>,
        created_at: DateTime<Utc>,
    ) -> Result<Self, KbError> {
        if let Some(bad) = entries.iter().find(|e| e.vector.dim() != dim) {
            return Err(KbError::DimensionMismatch { expected: dim, actual: bad.vector.dim() });
        }
        Ok(Self { dim, fingerprint: fingerprint.into(), entries, created_at })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }

    /// Top-`k` entries by cosine against an already-embedded query. Ties keep
    /// ingestion order because the sort is stable.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<RetrievalHit>, KbError> {
        if query.dim() != self.dim {
            return Err(KbError::DimensionMismatch { expected: self.dim, actual: query.dim() });
        }
        if k == 0 || self.entries.is_empty() {
            return Ok(Vec::new());
        }
        let mut scored: Vec<(usize, f64)> =
            self.entries.iter().enumerate().map(|(i, e)| (i, e.vector.dot(query))).collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal));
        Ok(scored
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(r, (entry, score))| RetrievalHit {
                rank: r + 1,
                score,
                entry,
                chunk: self.entries[entry].chunk.clone(),
            })
            .collect())
    }
}

/// Chunks and embeds `corpus` in document order.
pub fn build_index(
    corpus: &[KnowledgeDocument],
    provider: &dyn EmbeddingProvider,
    chunk_size: usize,
    overlap: usize,
) -> Result<KnowledgeIndex, KbError> {
    if corpus.is_empty() {
        return Err(KbError::EmptyCorpus);
    }
    let mut chunks = Vec::new();
    for doc in corpus {
        doc.validate()?;
        chunks.extend(chunk_document(doc, chunk_size, overlap)?);
    }

    let mut entries = Vec::with_capacity(chunks.len());
    let mut pending = chunks.into_iter().peekable();
    while pending.peek().is_some() {
        let batch: Vec<Chunk> = pending.by_ref().take(EMBED_BATCH).collect();
        let texts: Vec<&str> = batch.iter().map(|c| c.text.as_str()).collect();
        let vectors = embed(&texts, provider)?;
        entries.extend(batch.into_iter().zip(vectors).map(|(chunk, vector)| IndexEntry { chunk, vector }));
    }
    KnowledgeIndex::from_entries(provider.dim(), provider.fingerprint(), entries, Utc::now())
}

/// Embeds `query` and returns the `min(k, len)` best entries.
pub fn retrieve(
    index: &KnowledgeIndex,
    query: &str,
    k: usize,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<RetrievalHit>, KbError> {
    let fingerprint = provider.fingerprint();
    if fingerprint != index.fingerprint {
        return Err(KbError::FingerprintMismatch { index: index.fingerprint.clone(), query: fingerprint });
    }
    if k == 0 || index.is_empty() {
        return Ok(Vec::new());
    }
    let q = embed(&[query], provider)?.pop().expect("one vector per input");
    index.search(&q, k)
}
