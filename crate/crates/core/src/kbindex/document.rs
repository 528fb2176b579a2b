use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::KbError;
use crate::Language;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Textbook,
    Guideline,
    Consensus,
    Literature,
}

impl FromStr for SourceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "textbook" => Ok(SourceKind::Textbook),
            "guideline" => Ok(SourceKind::Guideline),
            "consensus" => Ok(SourceKind::Consensus),
            "literature" => Ok(SourceKind::Literature),
            other => Err(format!("unknown source_kind {other:?}")),
        }
    }
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceKind::Textbook => "textbook",
            SourceKind::Guideline => "guideline",
            SourceKind::Consensus => "consensus",
            SourceKind::Literature => "literature",
        })
    }
}

/// One source document of the knowledge base.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeDocument {
    pub doc_id: String,
    pub title: String,
    pub source_kind: SourceKind,
    pub language: Language,
    pub body: String,
}

impl KnowledgeDocument {
    /// Checks the per-document invariants. Ids must be usable inside a
    /// `[doc_id:chunk]` citation tag, so they are restricted to `[A-Za-z0-9_.-]`.
    pub fn validate(&self) -> Result<(), KbError> {
        let invalid = |reason: &str| KbError::InvalidDocument {
            doc_id: self.doc_id.clone(),
            reason: reason.to_string(),
        };
        if self.doc_id.is_empty() {
            return Err(invalid("empty doc_id"));
        }
        if !self
            .doc_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        {
            return Err(invalid("doc_id may only contain ASCII letters, digits, '_', '-' and '.'"));
        }
        if self.body.trim().is_empty() {
            return Err(invalid("empty body"));
        }
        Ok(())
    }
}

/// Parses one corpus file: `key: value` front matter, a blank line, then the body.
pub fn parse_document(path: &Path, content: &str) -> Result<KnowledgeDocument, KbError> {
    let err = |reason: String| KbError::Corpus { path: path.to_path_buf(), reason };
    let content = content.strip_prefix('\u{feff}').unwrap_or(content);

    let mut id = None;
    let mut title = None;
    let mut kind = None;
    let mut language = None;
    let mut body_start = None;
    let mut offset = 0;

    for line in content.split_inclusive('\n') {
        let trimmed = line.trim_end_matches(['\n', '\r']);
        offset += line.len();
        if trimmed.trim().is_empty() {
            body_start = Some(offset);
            break;
        }
        let Some((key, value)) = trimmed.split_once(':') else {
            return Err(err(format!("missing front-matter: expected `key: value`, found {trimmed:?}")));
        };
        let value = value.trim().to_string();
        match key.trim() {
            "id" => id = Some(value),
            "title" => title = Some(value),
            "source_kind" => kind = Some(value.parse::<SourceKind>().map_err(err)?),
            "language" => {
                language = Some(value.parse::<Language>().map_err(|e| err(e.to_string()))?)
            }
            // Unknown keys are tolerated so corpora can carry extra provenance.
            _ => {}
        }
    }

    let missing = |k: &str| err(format!("missing front-matter key `{k}`"));
    let body_start = body_start.ok_or_else(|| err("missing front-matter: no blank line before body".into()))?;
    let doc = KnowledgeDocument {
        doc_id: id.ok_or_else(|| missing("id"))?,
        title: title.ok_or_else(|| missing("title"))?,
        source_kind: kind.ok_or_else(|| missing("source_kind"))?,
        language: language.ok_or_else(|| missing("language"))?,
        body: content[body_start..].to_string(),
    };
    doc.validate().map_err(|e| err(e.to_string()))?;
    Ok(doc)
}

/// Loads every regular file of `dir` in file-name order. Hidden files are skipped.
pub fn load_corpus_dir(dir: &Path) -> Result<Vec<KnowledgeDocument>, KbError> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .filter(|p| !p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('.')))
        .collect();
    paths.sort();

    let mut seen = HashSet::new();
    let mut docs = Vec::with_capacity(paths.len());
    for path in paths {
        let content = fs::read_to_string(&path).map_err(|e| KbError::Corpus {
            path: path.clone(),
            reason: format!("not readable as UTF-8 text: {e}"),
        })?;
        let doc = parse_document(&path, &content)?;
        if !seen.insert(doc.doc_id.clone()) {
            return Err(KbError::Corpus { path, reason: format!("duplicate doc_id {:?}", doc.doc_id) });
        }
        docs.push(doc);
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "id: aao-2023\ntitle: Myopia guideline\nsource_kind: guideline\nlanguage: en\n\nBody line one.\nLine two.\n";

    #[test]
    fn parses_front_matter_and_body() {
        let doc = parse_document(Path::new("a.txt"), SAMPLE).unwrap();
        assert_eq!(doc.doc_id, "aao-2023");
        assert_eq!(doc.source_kind, SourceKind::Guideline);
        assert_eq!(doc.language, Language::En);
        assert_eq!(doc.body, "Body line one.\nLine two.\n");
    }

    #[test]
    fn missing_front_matter_names_the_file() {
        let err = parse_document(Path::new("notes/b.txt"), "Just a body without header\n\nmore").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("notes/b.txt"), "{msg}");
        assert!(msg.contains("front-matter"), "{msg}");
    }

    #[test]
    fn missing_key_is_reported() {
        let err = parse_document(Path::new("c.txt"), "id: x\ntitle: t\nlanguage: en\n\nbody").unwrap_err();
        assert!(err.to_string().contains("source_kind"));
    }

    #[test]
    fn rejects_bad_enum_and_empty_body() {
        assert!(parse_document(Path::new("d"), "id: x\ntitle: t\nsource_kind: blog\nlanguage: en\n\nbody").is_err());
        assert!(parse_document(Path::new("d"), "id: x\ntitle: t\nsource_kind: textbook\nlanguage: fr\n\nbody").is_err());
        assert!(parse_document(Path::new("d"), "id: x\ntitle: t\nsource_kind: textbook\nlanguage: en\n\n  \n").is_err());
    }

    #[test]
    fn rejects_ids_unusable_in_citation_tags() {
        let bad = "id: a:b\ntitle: t\nsource_kind: textbook\nlanguage: en\n\nbody";
        assert!(parse_document(Path::new("e"), bad).is_err());
    }

    #[test]
    fn corpus_dir_is_sorted_and_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.txt"), SAMPLE.replace("aao-2023", "b")).unwrap();
        fs::write(dir.path().join("a.txt"), SAMPLE.replace("aao-2023", "a")).unwrap();
        fs::write(dir.path().join(".hidden"), "junk").unwrap();
        let docs = load_corpus_dir(dir.path()).unwrap();
        assert_eq!(docs.iter().map(|d| d.doc_id.as_str()).collect::<Vec<_>>(), ["a", "b"]);

        fs::write(dir.path().join("c.txt"), SAMPLE.replace("aao-2023", "a")).unwrap();
        assert!(load_corpus_dir(dir.path()).unwrap_err().to_string().contains("duplicate"));
    }
}
