//! Retrieval substrate: documents are chunked to a token budget, embedded
//! with a pluggable provider and searched with exact cosine similarity.

mod chunk;
mod document;
mod embed;
mod index;
mod persist;
mod prompt;

pub use chunk::{chunk_document, Chunk, DEFAULT_CHUNK_SIZE};
pub use document::{load_corpus_dir, parse_document, KnowledgeDocument, SourceKind};
pub use embed::{
    embed, EmbedError, EmbeddingProvider, EmbeddingVector, HttpEmbeddingProvider,
    HttpEmbeddingSettings, MockEmbedder, MOCK_DIM, MOCK_SEED,
};
pub use index::{build_index, retrieve, KnowledgeIndex, RetrievalHit, DEFAULT_K};
pub use persist::{load_index, read_index, save_index, write_index, FORMAT_VERSION, MAGIC};
pub use prompt::{
    augment_prompt, escape_context_text, parse_augmented_prompt, render_context, unescape_context_text,
    ContextBlock, ParsedPrompt, RagTemplate,
};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum KbError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid document {doc_id:?}: {reason}")]
    InvalidDocument { doc_id: String, reason: String },
    #[error("{path}: {reason}")]
    Corpus { path: PathBuf, reason: String },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("embedder fingerprint mismatch: index built with {index:?}, query uses {query:?}")]
    FingerprintMismatch { index: String, query: String },
    #[error("vector dimension mismatch: index has {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("not an index file (bad magic {found:?})")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported index format version {found} (this build reads up to {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("corrupt index file: {0}")]
    Corrupt(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
