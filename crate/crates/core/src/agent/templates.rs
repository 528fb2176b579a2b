use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::AgentError;
use crate::imagetool::GradeSentences;
use crate::Language;

const TEMPLATE_FILES: [&str; 6] = ["system.txt", "context.txt", "no_context.txt", "grading.txt", "grades.txt", "followups.txt"];

/// Prompt text for one language.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    pub system: String,
    /// Holds `{context}` once.
    pub context: String,
    /// Added to the system message when retrieval produced nothing.
    pub no_context: String,
    /// Holds `{grading}` once.
    pub grading: String,
    pub grade_sentences: GradeSentences,
    /// Exactly three default follow-up questions.
    pub default_followups: Vec<String>,
}

impl TemplateSet {
    fn from_files(files: &BTreeMap<&str, String>) -> Result<Self, AgentError> {
        let get = |name: &str| files[name].clone();
        let context = get("context.txt");
        if context.matches("{context}").count() != 1 {
            return Err(AgentError::Config("context.txt must hold {context} exactly once".into()));
        }
        let grading = get("grading.txt");
        if grading.matches("{grading}").count() != 1 {
            return Err(AgentError::Config("grading.txt must hold {grading} exactly once".into()));
        }
        let grade_sentences =
            GradeSentences::parse(&get("grades.txt")).map_err(|e| AgentError::Config(format!("grades.txt: {e}")))?;
        let default_followups: Vec<String> =
            get("followups.txt").lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect();
        if default_followups.len() != 3 {
            return Err(AgentError::Config(format!(
                "followups.txt must list 3 questions, found {}",
                default_followups.len()
            )));
        }
        Ok(Self {
            system: get("system.txt").trim_end().to_string(),
            context,
            no_context: get("no_context.txt").trim_end().to_string(),
            grading,
            grade_sentences,
            default_followups,
        })
    }

    pub fn builtin(language: Language) -> Self {
        let files: BTreeMap<&str, String> = match language {
            Language::En => [
                ("system.txt", include_str!("../../templates/en/system.txt")),
                ("context.txt", include_str!("../../templates/en/context.txt")),
                ("no_context.txt", include_str!("../../templates/en/no_context.txt")),
                ("grading.txt", include_str!("../../templates/en/grading.txt")),
                ("grades.txt", include_str!("../../templates/en/grades.txt")),
                ("followups.txt", include_str!("../../templates/en/followups.txt")),
            ],
            Language::Zh => [
                ("system.txt", include_str!("../../templates/zh/system.txt")),
                ("context.txt", include_str!("../../templates/zh/context.txt")),
                ("no_context.txt", include_str!("../../templates/zh/no_context.txt")),
                ("grading.txt", include_str!("../../templates/zh/grading.txt")),
                ("grades.txt", include_str!("../../templates/zh/grades.txt")),
                ("followups.txt", include_str!("../../templates/zh/followups.txt")),
            ],
        }
        .into_iter()
        .map(|(k, v)| (k, v.to_string()))
        .collect();
        Self::from_files(&files).expect("built-in templates are valid")
    }

    /// Reads the six template files from `dir`. A missing file is a configuration error.
    pub fn load_dir(dir: &Path) -> Result<Self, AgentError> {
        let mut files = BTreeMap::new();
        for name in TEMPLATE_FILES {
            let path = dir.join(name);
            let text = fs::read_to_string(&path)
                .map_err(|e| AgentError::Config(format!("template {}: {e}", path.display())))?;
            files.insert(name, text);
        }
        Self::from_files(&files)
    }
}

/// Template sets keyed by language.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplates {
    sets: BTreeMap<Language, TemplateSet>,
}

impl PromptTemplates {
    pub fn builtin() -> Self {
        Self { sets: Language::ALL.iter().map(|&l| (l, TemplateSet::builtin(l))).collect() }
    }

    pub fn empty() -> Self {
        Self { sets: BTreeMap::new() }
    }

    /// Loads `<root>/<lang>/` for every language present under `root`.
    pub fn load_root(root: &Path) -> Result<Self, AgentError> {
        let mut out = Self::empty();
        for lang in Language::ALL {
            let dir = root.join(lang.as_str());
            if dir.is_dir() {
                out.insert(lang, TemplateSet::load_dir(&dir)?);
            }
        }
        if out.sets.is_empty() {
            return Err(AgentError::Config(format!("no language template directories under {}", root.display())));
        }
        Ok(out)
    }

    pub fn insert(&mut self, language: Language, set: TemplateSet) {
        self.sets.insert(language, set);
    }

    pub fn get(&self, language: Language) -> Result<&TemplateSet, AgentError> {
        self.sets
            .get(&language)
            .ok_or_else(|| AgentError::Config(format!("no prompt templates loaded for language {language}")))
    }
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self::builtin()
    }
}
