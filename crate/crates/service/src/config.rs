//! Service configuration: a TOML file, overridden by `MYOPIA_*` environment
//! variables. Credentials never appear in the file; it names the environment
//! variables that hold them.
//!
//! ```toml
//! listen = "127.0.0.1:8080"
//! session_store = "var/sessions"
//! static_dir = "webui/dist"          # optional
//! template_dir = "templates"         # optional, holds en/ and zh/
//! max_image_bytes = 8388608
//! clinic_token_env = "MYOPIA_CLINIC_TOKEN"   # optional shared header token
//!
//! [agent]
//! k = 4
//! history_window = 6
//! temperature = 0.2
//!
//! [indexes]
//! en = "var/kb-en.mkdx"
//! zh = "var/kb-zh.mkdx"
//!
//! [chat]
//! kind = "http"                      # or "scripted" with `script = "..."`
//! endpoint = "https://llm.example/v1/chat/completions"
//! model = "some-model"
//! api_key_env = "MYOPIA_CHAT_KEY"
//!
//! [embedding]
//! kind = "mock"                      # or "http" with endpoint, model, dim, api_key_env
//!
//! [classifier]
//! kind = "fixture"                   # or "http" with endpoint, api_key_env
//! sidecar = "fixtures/grading_sidecar.csv"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use myopia_core::agent::{AgentConfig, HttpChatSettings};
use myopia_core::imagetool::HttpClassifierSettings;
use serde::{Deserialize, Serialize};

pub const DEFAULT_MAX_IMAGE_BYTES: usize = 8 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config key `{key}` looks like a credential; store it in an environment variable and set `{key}_env` instead")]
    InlineSecret { key: String },
    #[error("environment override {var}: {message}")]
    Env { var: String, message: String },
    #[error("config `{key}` points to {path}, which does not exist")]
    MissingPath { key: String, path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    pub session_store: PathBuf,
    #[serde(default)]
    pub static_dir: Option<PathBuf>,
    #[serde(default)]
    pub template_dir: Option<PathBuf>,
    #[serde(default = "default_max_image_bytes")]
    pub max_image_bytes: usize,
    #[serde(default)]
    pub clinic_token_env: Option<String>,
    /// Seconds a provider reachability probe result is reused by the health report.
    #[serde(default = "default_probe_ttl")]
    pub probe_ttl_secs: u64,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub indexes: IndexPaths,
    pub chat: ChatBackendConfig,
    #[serde(default)]
    pub embedding: EmbeddingBackendConfig,
    #[serde(default)]
    pub classifier: Option<ClassifierBackendConfig>,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_max_image_bytes() -> usize {
    DEFAULT_MAX_IMAGE_BYTES
}

fn default_probe_ttl() -> u64 {
    30
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexPaths {
    #[serde(default)]
    pub en: Option<PathBuf>,
    #[serde(default)]
    pub zh: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChatBackendConfig {
    /// Offline rule-based provider read from a JSON script.
    Scripted { script: PathBuf },
    Http(HttpChatSettingsConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpChatSettingsConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub timeout_secs: Option<u64>,
}

impl HttpChatSettingsConfig {
    pub fn settings(&self) -> HttpChatSettings {
        HttpChatSettings {
            endpoint: self.endpoint.clone(),
            model: self.model.clone(),
            api_key_env: self.api_key_env.clone(),
            timeout_secs: self.timeout_secs.unwrap_or(60),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingBackendConfig {
    #[default]
    Mock,
    Http {
        endpoint: String,
        model: String,
        dim: usize,
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default)]
        timeout_secs: Option<u64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierBackendConfig {
    /// Read-only lookup table of precomputed probabilities.
    Fixture { sidecar: PathBuf },
    Http {
        endpoint: String,
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default)]
        timeout_secs: Option<u64>,
    },
}

impl ClassifierBackendConfig {
    pub fn http_settings(&self) -> Option<HttpClassifierSettings> {
        match self {
            ClassifierBackendConfig::Http { endpoint, api_key_env, timeout_secs } => Some(HttpClassifierSettings {
                endpoint: endpoint.clone(),
                api_key_env: api_key_env.clone(),
                timeout_secs: timeout_secs.unwrap_or(30),
            }),
            ClassifierBackendConfig::Fixture { .. } => None,
        }
    }
}

const SECRET_WORDS: [&str; 5] = ["api_key", "apikey", "token", "secret", "password"];

/// Rejects any key that looks like an inline credential. Keys ending in `_env`
/// name an environment variable and are allowed.
fn reject_inline_secrets(value: &toml::Value) -> Result<(), ConfigError> {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let lower = k.to_ascii_lowercase();
                if !lower.ends_with("_env") && SECRET_WORDS.iter().any(|w| lower.contains(w)) {
                    return Err(ConfigError::InlineSecret { key: k.clone() });
                }
                reject_inline_secrets(v)?;
            }
            Ok(())
        }
        toml::Value::Array(items) => items.iter().try_for_each(reject_inline_secrets),
        _ => Ok(()),
    }
}

impl ServiceConfig {
    /// Parses TOML text. Relative paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, origin: &Path, base_dir: &Path) -> Result<Self, ConfigError> {
        let parse_err = |message: String| ConfigError::Parse { path: origin.to_path_buf(), message };
        let value: toml::Value = toml::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        reject_inline_secrets(&value)?;
        let mut cfg: ServiceConfig = value.try_into().map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
        cfg.resolve_relative(base_dir);
        Ok(cfg)
    }

    /// Reads the file, then applies environment overrides from the process environment.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::from_toml(&text, path, base)?;
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.session_store);
        self.static_dir.iter_mut().for_each(fix);
        self.template_dir.iter_mut().for_each(fix);
        self.indexes.en.iter_mut().for_each(fix);
        self.indexes.zh.iter_mut().for_each(fix);
        if let ChatBackendConfig::Scripted { script } = &mut self.chat {
            fix(script);
        }
        if let Some(ClassifierBackendConfig::Fixture { sidecar }) = &mut self.classifier {
            fix(sidecar);
        }
    }

    /// Overrides: `MYOPIA_LISTEN`, `MYOPIA_SESSION_STORE`, `MYOPIA_STATIC_DIR`,
    /// `MYOPIA_TEMPLATE_DIR`, `MYOPIA_INDEX_EN`, `MYOPIA_INDEX_ZH`,
    /// `MYOPIA_MAX_IMAGE_BYTES`, `MYOPIA_CLINIC_TOKEN_ENV`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = lookup("MYOPIA_LISTEN") {
            self.listen = v;
        }
        if let Some(v) = lookup("MYOPIA_SESSION_STORE") {
            self.session_store = v.into();
        }
        if let Some(v) = lookup("MYOPIA_STATIC_DIR") {
            self.static_dir = Some(v.into());
        }
        if let Some(v) = lookup("MYOPIA_TEMPLATE_DIR") {
            self.template_dir = Some(v.into());
        }
        if let Some(v) = lookup("MYOPIA_INDEX_EN") {
            self.indexes.en = Some(v.into());
        }
        if let Some(v) = lookup("MYOPIA_INDEX_ZH") {
            self.indexes.zh = Some(v.into());
        }
        if let Some(v) = lookup("MYOPIA_MAX_IMAGE_BYTES") {
            self.max_image_bytes = v.parse().map_err(|_| ConfigError::Env {
                var: "MYOPIA_MAX_IMAGE_BYTES".into(),
                message: format!("{v:?} is not a byte count"),
            })?;
        }
        if let Some(v) = lookup("MYOPIA_CLINIC_TOKEN_ENV") {
            self.clinic_token_env = Some(v);
        }
        Ok(())
    }

    /// Every input path must exist. The session store is created when missing.
    pub fn check_paths(&self) -> Result<(), ConfigError> {
        let must_exist = |key: &str, p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(ConfigError::MissingPath { key: key.into(), path: p.to_path_buf() })
            }
        };
        if let Some(p) = &self.static_dir {
            must_exist("static_dir", p)?;
        }
        if let Some(p) = &self.template_dir {
            must_exist("template_dir", p)?;
        }
        if let Some(p) = &self.indexes.en {
            must_exist("indexes.en", p)?;
        }
        if let Some(p) = &self.indexes.zh {
            must_exist("indexes.zh", p)?;
        }
        if let ChatBackendConfig::Scripted { script } = &self.chat {
            must_exist("chat.script", script)?;
        }
        if let Some(ClassifierBackendConfig::Fixture { sidecar }) = &self.classifier {
            must_exist("classifier.sidecar", sidecar)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
session_store = "sessions"

[indexes]
en = "kb-en.mkdx"

[chat]
kind = "http"
endpoint = "http://127.0.0.1:9/v1/chat/completions"
model = "m"
api_key_env = "CHAT_KEY"

[classifier]
kind = "fixture"
sidecar = "/abs/sidecar.csv"
"#;

    #[test]
    fn parses_and_resolves_relative_paths() {
        let cfg = ServiceConfig::from_toml(BASIC, Path::new("svc.toml"), Path::new("/etc/myopia")).unwrap();
        assert_eq!(cfg.listen, "127.0.0.1:8080");
        assert_eq!(cfg.session_store, PathBuf::from("/etc/myopia/sessions"));
        assert_eq!(cfg.indexes.en, Some(PathBuf::from("/etc/myopia/kb-en.mkdx")));
        assert_eq!(cfg.indexes.zh, None);
        assert_eq!(cfg.agent, AgentConfig::default());
        assert_eq!(cfg.embedding, EmbeddingBackendConfig::Mock);
        assert_eq!(cfg.classifier, Some(ClassifierBackendConfig::Fixture { sidecar: "/abs/sidecar.csv".into() }));
        match &cfg.chat {
            ChatBackendConfig::Http(h) => assert_eq!(h.settings().api_key_env.as_deref(), Some("CHAT_KEY")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inline_credentials_are_rejected() {
        let text = BASIC.replace("api_key_env = \"CHAT_KEY\"", "api_key = \"sk-live-123\"");
        let err = ServiceConfig::from_toml(&text, Path::new("svc.toml"), Path::new(".")).unwrap_err();
        assert!(matches!(err, ConfigError::InlineSecret { ref key } if key == "api_key"));
        assert!(!err.to_string().contains("sk-live-123"));
        let text = format!("clinic_token = \"abc\"\n{BASIC}");
        assert!(matches!(
            ServiceConfig::from_toml(&text, Path::new("svc.toml"), Path::new(".")),
            Err(ConfigError::InlineSecret { .. })
        ));
    }

    #[test]
    fn unknown_keys_are_errors() {
        let text = format!("colour = \"blue\"\n{BASIC}");
        assert!(matches!(
            ServiceConfig::from_toml(&text, Path::new("svc.toml"), Path::new(".")),
            Err(ConfigError::Parse { .. })
        ));
    }

    #[test]
    fn environment_overrides_file_values() {
        let mut cfg = ServiceConfig::from_toml(BASIC, Path::new("svc.toml"), Path::new("/etc/myopia")).unwrap();
        cfg.apply_env(|k| match k {
            "MYOPIA_LISTEN" => Some("0.0.0.0:9000".into()),
            "MYOPIA_INDEX_ZH" => Some("/data/zh.mkdx".into()),
            "MYOPIA_MAX_IMAGE_BYTES" => Some("1024".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(cfg.listen, "0.0.0.0:9000");
        assert_eq!(cfg.indexes.zh, Some(PathBuf::from("/data/zh.mkdx")));
        assert_eq!(cfg.max_image_bytes, 1024);
        assert!(cfg.apply_env(|k| (k == "MYOPIA_MAX_IMAGE_BYTES").then(|| "lots".to_string())).is_err());
    }

    #[test]
    fn missing_paths_are_reported_by_key() {
        let cfg = ServiceConfig::from_toml(BASIC, Path::new("svc.toml"), Path::new("/nonexistent")).unwrap();
        match cfg.check_paths() {
            Err(ConfigError::MissingPath { key, .. }) => assert_eq!(key, "indexes.en"),
            other => panic!("{other:?}"),
        }
    }
}
