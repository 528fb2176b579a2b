use serde::{Deserialize, Serialize};

use super::{KbError, KnowledgeDocument};
use crate::tokenize::tokenize;

/// Token budget per chunk.
pub const DEFAULT_CHUNK_SIZE: usize = 250;

/// A contiguous token window `[token_start, token_end)` of one document.
///
/// `text` is the source slice from the first token's first byte to the last
/// token's last byte, so interior punctuation and spacing survive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub chunk_index: u32,
    pub token_start: u32,
    pub token_end: u32,
    pub text: String,
}

impl Chunk {
    pub fn token_count(&self) -> u32 {
        self.token_end - self.token_start
    }

    /// Citation tag used in prompts and answers.
    pub fn citation_tag(&self) -> String {
        format!("[{}:{}]", self.doc_id, self.chunk_index)
    }
}

/// Splits a document into windows of at most `chunk_size` tokens whose starts
/// are `chunk_size - overlap` tokens apart. The last window may be shorter.
pub fn chunk_document(doc: &KnowledgeDocument, chunk_size: usize, overlap: usize) -> Result<Vec<Chunk>, KbError> {
    if chunk_size == 0 {
        return Err(KbError::Config("chunk_size must be positive".into()));
    }
    if overlap >= chunk_size {
        return Err(KbError::Config(format!(
            "overlap ({overlap}) must be smaller than chunk_size ({chunk_size})"
        )));
    }
    let tokens = tokenize(&doc.body);
    let total = tokens.len();
    let stride = chunk_size - overlap;

    let mut chunks = Vec::new();
    let mut start = 0;
    while start < total {
        let end = (start + chunk_size).min(total);
        let bytes = tokens[start].span.0..tokens[end - 1].span.1;
        chunks.push(Chunk {
            doc_id: doc.doc_id.clone(),
            chunk_index: chunks.len() as u32,
            token_start: start as u32,
            token_end: end as u32,
            text: doc.body[bytes].to_string(),
        });
        if end == total {
            break;
        }
        start += stride;
    }
    Ok(chunks)
}
