//! CSV fixture loading with line-numbered errors.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct FixtureError {
    pub path: PathBuf,
    /// 1-based CSV line, the header being line 1.
    pub line: Option<u64>,
    pub message: String,
}

impl fmt::Display for FixtureError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}: row {line}: {}", self.path.display(), self.message),
            None => write!(f, "{}: {}", self.path.display(), self.message),
        }
    }
}

impl FixtureError {
    pub fn new(path: &Path, line: Option<u64>, message: impl Into<String>) -> Self {
        Self { path: path.to_path_buf(), line, message: message.into() }
    }
}

/// Deserializes every data row, pairing it with its line number.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<(u64, T)>, FixtureError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| FixtureError::new(path, None, e.to_string()))?;
    let headers = reader.headers().map_err(|e| FixtureError::new(path, Some(1), e.to_string()))?.clone();
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line());
            FixtureError::new(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row: T = record
            .deserialize(Some(&headers))
            .map_err(|e| FixtureError::new(path, Some(line), e.to_string()))?;
        out.push((line, row));
    }
    Ok(out)
}

/// Parses an answer choice given as a letter `A`–`E` or a 0-based index `0`–`4`.
pub fn parse_choice(s: &str) -> Option<u8> {
    let s = s.trim();
    match s.as_bytes() {
        [c @ b'A'..=b'E'] => Some(c - b'A'),
        [c @ b'a'..=b'e'] => Some(c - b'a'),
        [c @ b'0'..=b'4'] => Some(c - b'0'),
        _ => None,
    }
}
