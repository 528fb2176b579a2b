use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{GradeLabel, GradeProbabilities};

/// Encodings accepted for fundus photographs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Jpeg,
    Png,
}

impl ImageFormat {
    pub fn sniff(bytes: &[u8]) -> Option<Self> {
        if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
            Some(ImageFormat::Jpeg)
        } else if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
            Some(ImageFormat::Png)
        } else {
            None
        }
    }

    pub fn content_type(self) -> &'static str {
        match self {
            ImageFormat::Jpeg => "image/jpeg",
            ImageFormat::Png => "image/png",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Jpeg => "jpg",
            ImageFormat::Png => "png",
        }
    }
}

/// Image bytes plus the reference they were uploaded or listed under.
#[derive(Clone, PartialEq, Eq)]
pub struct FundusImage {
    pub reference: String,
    pub bytes: Vec<u8>,
}

impl fmt::Debug for FundusImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FundusImage").field("reference", &self.reference).field("bytes", &self.bytes.len()).finish()
    }
}

impl FundusImage {
    pub fn new(reference: impl Into<String>, bytes: Vec<u8>) -> Self {
        Self { reference: reference.into(), bytes }
    }

    /// Hex SHA-256 of the bytes; the content address used by the transcript store.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(&self.bytes))
    }

    pub fn format(&self) -> Option<ImageFormat> {
        ImageFormat::sniff(&self.bytes)
    }

    /// Full decode of a JPEG or PNG. Anything else is rejected.
    pub fn validate_decodable(&self) -> Result<ImageFormat, ClassifyError> {
        let format = self
            .format()
            .ok_or_else(|| ClassifyError::Undecodable("not a JPEG or PNG image".into()))?;
        let fmt = match format {
            ImageFormat::Jpeg => image::ImageFormat::Jpeg,
            ImageFormat::Png => image::ImageFormat::Png,
        };
        image::load_from_memory_with_format(&self.bytes, fmt).map_err(|e| ClassifyError::Undecodable(e.to_string()))?;
        Ok(format)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassifyError {
    #[error("classifier transport error (status {status:?}): {message}")]
    Transport { status: Option<u16>, message: String },
    #[error("classifier contract violation: {0}")]
    ContractViolation(String),
    #[error("image not decodable: {0}")]
    Undecodable(String),
    #[error("no fixture record for image {0:?}")]
    UnknownImage(String),
}

/// Anything that maps image bytes to five raw category probabilities.
pub trait ClassifierBackend: Send + Sync {
    fn name(&self) -> &str;

    fn predict(&self, image: &FundusImage) -> Result<Vec<f64>, ClassifyError>;

    fn probe(&self) -> bool {
        true
    }
}

/// Runs the backend and enforces the output contract: five finite values in
/// [0, 1] summing to 1 within 1e-3. The accepted vector is renormalized so the
/// returned probabilities sum to 1 within 1e-6.
pub fn classify(
    image: &FundusImage,
    backend: &dyn ClassifierBackend,
) -> Result<(GradeProbabilities, GradeLabel), ClassifyError> {
    let raw = backend.predict(image)?;
    let arr: [f64; 5] = raw
        .as_slice()
        .try_into()
        .map_err(|_| ClassifyError::ContractViolation(format!("expected 5 probabilities, got {}", raw.len())))?;
    if let Some(bad) = arr.iter().find(|p| !p.is_finite() || **p < 0.0 || **p > 1.0 + 1e-9) {
        return Err(ClassifyError::ContractViolation(format!("probability {bad} outside [0, 1]")));
    }
    let sum: f64 = arr.iter().sum();
    if (sum - 1.0).abs() > 1e-3 {
        return Err(ClassifyError::ContractViolation(format!("probabilities sum to {sum}, not 1")));
    }
    let probs = GradeProbabilities::renormalized(arr);
    Ok((probs, probs.argmax()))
}

/// One row of the fixture sidecar `image_ref,participant_id,label,p0,p1,p2,p3,p4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarRow {
    pub image_ref: String,
    pub participant_id: String,
    pub label: GradeLabel,
    pub probs: Option<[f64; 5]>,
}

#[derive(Deserialize)]
struct RawSidecarRow {
    image_ref: String,
    participant_id: String,
    label: String,
    #[serde(default)]
    p0: Option<f64>,
    #[serde(default)]
    p1: Option<f64>,
    #[serde(default)]
    p2: Option<f64>,
    #[serde(default)]
    p3: Option<f64>,
    #[serde(default)]
    p4: Option<f64>,
}

/// Reads a sidecar CSV. Probability columns may be absent (labels-only files),
/// but a row must carry either all five or none.
pub fn read_sidecar(path: &Path) -> Result<Vec<SidecarRow>, String> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.deserialize::<RawSidecarRow>().enumerate() {
        let line = i + 2;
        let raw = rec.map_err(|e| format!("{}: row {line}: {e}", path.display()))?;
        let label = raw.label.parse().map_err(|e| format!("{}: row {line}: {e}", path.display()))?;
        let probs = match (raw.p0, raw.p1, raw.p2, raw.p3, raw.p4) {
            (Some(a), Some(b), Some(c), Some(d), Some(e)) => Some([a, b, c, d, e]),
            (None, None, None, None, None) => None,
            _ => return Err(format!("{}: row {line}: partial probability columns", path.display())),
        };
        if raw.image_ref.is_empty() || raw.participant_id.is_empty() {
            return Err(format!("{}: row {line}: empty image_ref or participant_id", path.display()));
        }
        rows.push(SidecarRow { image_ref: raw.image_ref, participant_id: raw.participant_id, label, probs });
    }
    Ok(rows)
}

/// Read-only backend answering from a sidecar table. An image is looked up by
/// its reference, then by the reference's file name, then by content hash.
#[derive(Debug, Clone, Default)]
pub struct FixtureBackend {
    table: HashMap<String, [f64; 5]>,
}

impl FixtureBackend {
    pub fn from_rows(rows: &[SidecarRow]) -> Self {
        let table = rows.iter().filter_map(|r| r.probs.map(|p| (r.image_ref.clone(), p))).collect();
        Self { table }
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        Ok(Self::from_rows(&read_sidecar(path)?))
    }

    pub fn insert(&mut self, image_ref: impl Into<String>, probs: [f64; 5]) {
        self.table.insert(image_ref.into(), probs);
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl ClassifierBackend for FixtureBackend {
    fn name(&self) -> &str {
        "fixture"
    }

    fn predict(&self, image: &FundusImage) -> Result<Vec<f64>, ClassifyError> {
        let file_name = Path::new(&image.reference).file_name().and_then(|n| n.to_str()).unwrap_or_default();
        [image.reference.as_str(), file_name, image.content_hash().as_str()]
            .iter()
            .find_map(|k| self.table.get(*k))
            .map(|p| p.to_vec())
            .ok_or_else(|| ClassifyError::UnknownImage(image.reference.clone()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpClassifierSettings {
    pub endpoint: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    30
}

/// Remote inference endpoint: raw image bytes in, `{probs: [5], model}` out.
pub struct HttpClassifier {
    settings: HttpClassifierSettings,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl fmt::Debug for HttpClassifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpClassifier").field("settings", &self.settings).finish_non_exhaustive()
    }
}

#[derive(Deserialize)]
struct ClassifierResponse {
    probs: Vec<f64>,
    #[allow(dead_code)]
    model: Option<String>,
}

impl HttpClassifier {
    pub fn new(settings: HttpClassifierSettings) -> Result<Self, ClassifyError> {
        let api_key = settings.api_key_env.as_deref().and_then(|v| std::env::var(v).ok());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(settings.timeout_secs))
            .build()
            .map_err(|e| ClassifyError::Transport { status: None, message: e.to_string() })?;
        Ok(Self { settings, api_key, client })
    }
}

impl ClassifierBackend for HttpClassifier {
    fn name(&self) -> &str {
        "http"
    }

    fn predict(&self, image: &FundusImage) -> Result<Vec<f64>, ClassifyError> {
        let format = image
            .format()
            .ok_or_else(|| ClassifyError::Undecodable("not a JPEG or PNG image".into()))?;
        let mut req = self
            .client
            .post(&self.settings.endpoint)
            .header(reqwest::header::CONTENT_TYPE, format.content_type())
            .body(image.bytes.clone());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ClassifyError::Transport {
            status: e.status().map(|s| s.as_u16()),
            message: e.without_url().to_string(),
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ClassifyError::Transport {
                status: Some(status.as_u16()),
                message: format!("classifier endpoint answered {status}"),
            });
        }
        let body: ClassifierResponse =
            resp.json().map_err(|e| ClassifyError::ContractViolation(format!("malformed response: {e}")))?;
        Ok(body.probs)
    }

    fn probe(&self) -> bool {
        crate::net::probe_endpoint(&self.settings.endpoint, Duration::from_secs(2))
    }
}
