use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::hashing::fnv1a64;
use crate::tokenize::tokenize;
use crate::Language;

/// Dimension of the mock embedder.
pub const MOCK_DIM: usize = 64;
/// Seed of the mock embedder's feature hash.
pub const MOCK_SEED: u64 = 0x4d4b_4458; // "MKDX"

/// Unit-norm embedding stored as `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    /// Normalizes `raw` to unit length. Returns `None` for a zero or non-finite vector.
    pub fn normalized(raw: &[f64]) -> Option<Self> {
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return None;
        }
        Some(Self(raw.iter().map(|v| (v / norm) as f32).collect()))
    }

    /// Wraps stored values without renormalizing; used by the index reader.
    pub(crate) fn from_stored(values: Vec<f32>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
    }

    /// Cosine similarity of two unit vectors, accumulated in `f64`.
    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbedError {
    /// Network or upstream failure. `retryable` is set for connection errors,
    /// timeouts, 429 and 5xx responses.
    #[error("embedding provider transport error (status {status:?}): {message}")]
    Transport { status: Option<u16>, message: String, retryable: bool },
    #[error("embedding provider returned a malformed response: {0}")]
    Protocol(String),
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("cannot embed text without tokens")]
    EmptyInput,
}

impl EmbedError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, EmbedError::Transport { retryable: true, .. })
    }
}

pub trait EmbeddingProvider: Send + Sync {
    /// Identifies provider, model, parameters and language. An index records the
    /// fingerprint it was built with and refuses queries from any other.
    fn fingerprint(&self) -> String;

    fn dim(&self) -> usize;

    /// Raw provider call. Callers should go through [`embed`], which checks
    /// counts and dimensions.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError>;

    /// Cheap reachability check for health reporting.
    fn probe(&self) -> bool {
        true
    }
}

/// Embeds `texts`, returning exactly one unit vector of the provider's dimension per input.
pub fn embed(texts: &[&str], provider: &dyn EmbeddingProvider) -> Result<Vec<EmbeddingVector>, EmbedError> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let vectors = provider.embed_batch(texts)?;
    if vectors.len() != texts.len() {
        return Err(EmbedError::Protocol(format!(
            "expected {} embeddings, got {}",
            texts.len(),
            vectors.len()
        )));
    }
    for v in &vectors {
        if v.dim() != provider.dim() {
            return Err(EmbedError::Dimension { expected: provider.dim(), actual: v.dim() });
        }
    }
    Ok(vectors)
}

/// Deterministic offline embedder: signed feature hashing of lower-cased token
/// unigrams and bigrams into `dim` buckets, then L2 normalization.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dim: usize,
    seed: u64,
    language: Language,
}

impl MockEmbedder {
    pub fn new(language: Language) -> Self {
        Self { dim: MOCK_DIM, seed: MOCK_SEED, language }
    }

    pub fn with_params(language: Language, dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self { dim, seed, language }
    }

    fn add_feature(&self, acc: &mut [f64], feature: &[u8]) {
        let h = fnv1a64(self.seed, feature);
        let bucket = (h % self.dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        acc[bucket] += sign;
    }

    pub fn embed_one(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let tokens: Vec<String> = tokenize(text).iter().map(|t| t.text.to_lowercase()).collect();
        if tokens.is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        let mut acc = vec![0.0f64; self.dim];
        let mut buf = Vec::new();
        for tok in &tokens {
            buf.clear();
            buf.extend_from_slice(b"u\x1f");
            buf.extend_from_slice(tok.as_bytes());
            self.add_feature(&mut acc, &buf);
        }
        for pair in tokens.windows(2) {
            buf.clear();
            buf.extend_from_slice(b"b\x1f");
            buf.extend_from_slice(pair[0].as_bytes());
            buf.push(0x1f);
            buf.extend_from_slice(pair[1].as_bytes());
            self.add_feature(&mut acc, &buf);
        }
        // Features can cancel out; fall back to the first unigram alone.
        EmbeddingVector::normalized(&acc).map(Ok).unwrap_or_else(|| {
            let mut acc = vec![0.0f64; self.dim];
            let mut first = b"u\x1f".to_vec();
            first.extend_from_slice(tokens[0].as_bytes());
            self.add_feature(&mut acc, &first);
            EmbeddingVector::normalized(&acc).ok_or(EmbedError::EmptyInput)
        })
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn fingerprint(&self) -> String {
        format!("mock-hash:v1:dim={}:seed={:#x}:lang={}", self.dim, self.seed, self.language)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts.iter().map(|t| self.embed_one(t)).collect()
    }
}

/// Connection settings for a remote embedding endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpEmbeddingSettings {
    pub endpoint: String,
    pub model: String,
    pub dim: usize,
    pub language: Language,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    30
}

/// Client for `POST {input, model}` → `{data: [{embedding}]}` endpoints.
pub struct HttpEmbeddingProvider {
    settings: HttpEmbeddingSettings,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl fmt::Debug for HttpEmbeddingProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpEmbeddingProvider")
            .field("settings", &self.settings)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    input: &'a [&'a str],
    model: &'a str,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl HttpEmbeddingProvider {
    pub fn new(settings: HttpEmbeddingSettings) -> Result<Self, EmbedError> {
        let api_key = settings.api_key_env.as_deref().and_then(|var| std::env::var(var).ok());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(settings.timeout_secs))
            .build()
            .map_err(|e| EmbedError::Transport { status: None, message: e.to_string(), retryable: false })?;
        Ok(Self { settings, api_key, client })
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn fingerprint(&self) -> String {
        format!("http:{}:dim={}:lang={}", self.settings.model, self.settings.dim, self.settings.language)
    }

    fn dim(&self) -> usize {
        self.settings.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        let mut req = self
            .client
            .post(&self.settings.endpoint)
            .json(&EmbeddingRequest { input: texts, model: &self.settings.model });
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| EmbedError::Transport {
            status: e.status().map(|s| s.as_u16()),
            message: e.without_url().to_string(),
            retryable: true,
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(EmbedError::Transport {
                status: Some(status.as_u16()),
                message: format!("embedding endpoint answered {status}"),
                retryable: status.is_server_error() || status.as_u16() == 429,
            });
        }
        let body: EmbeddingResponse = resp.json().map_err(|e| EmbedError::Protocol(e.to_string()))?;
        body.data
            .into_iter()
            .map(|d| {
                if d.embedding.len() != self.settings.dim {
                    return Err(EmbedError::Dimension { expected: self.settings.dim, actual: d.embedding.len() });
                }
                EmbeddingVector::normalized(&d.embedding)
                    .ok_or_else(|| EmbedError::Protocol("zero or non-finite embedding".into()))
            })
            .collect()
    }

    fn probe(&self) -> bool {
        crate::net::probe_endpoint(&self.settings.endpoint, Duration::from_secs(2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_is_deterministic() {
        let m = MockEmbedder::new(Language::En);
        let a = m.embed_one("axial length").unwrap();
        let b = m.embed_one("axial length").unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(
            a.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn mock_outputs_unit_vectors() {
        let m = MockEmbedder::new(Language::Zh);
        for text in ["axial length", "近视", "a", "myopia myopia myopia", "OK镜 orthokeratology lens"] {
            let v = m.embed_one(text).unwrap();
            assert_eq!(v.dim(), MOCK_DIM);
            assert!((v.norm() - 1.0).abs() < 1e-6, "{text}: {}", v.norm());
        }
    }

    #[test]
    fn different_sentences_have_cosine_below_one() {
        let m = MockEmbedder::new(Language::En);
        let a = m.embed_one("Outdoor time slows myopia progression.").unwrap();
        let b = m.embed_one("Atropine drops reduce axial elongation.").unwrap();
        let cos = a.dot(&b);
        assert!(cos < 1.0 - 1e-6, "{cos}");
        assert!(cos >= -1.0 - 1e-6);
    }

    #[test]
    fn casing_does_not_change_the_vector() {
        let m = MockEmbedder::new(Language::En);
        assert_eq!(m.embed_one("Myopia").unwrap(), m.embed_one("myopia").unwrap());
    }

    #[test]
    fn empty_text_is_rejected() {
        assert_eq!(MockEmbedder::new(Language::En).embed_one(" ,. "), Err(EmbedError::EmptyInput));
    }

    #[test]
    fn fingerprint_encodes_language() {
        assert_ne!(MockEmbedder::new(Language::En).fingerprint(), MockEmbedder::new(Language::Zh).fingerprint());
    }

    struct WrongDim;
    impl EmbeddingProvider for WrongDim {
        fn fingerprint(&self) -> String {
            "wrong".into()
        }
        fn dim(&self) -> usize {
            8
        }
        fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
            Ok(texts.iter().map(|_| EmbeddingVector::normalized(&[1.0, 0.0]).unwrap()).collect())
        }
    }

    #[test]
    fn embed_checks_dimension() {
        assert_eq!(embed(&["x"], &WrongDim), Err(EmbedError::Dimension { expected: 8, actual: 2 }));
    }
}
