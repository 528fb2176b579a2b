use std::fmt;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::Role;

pub const DEFAULT_TEMPERATURE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("chat provider transport error (status {status:?}): {message}")]
    Transport { status: Option<u16>, message: String },
    #[error("chat provider protocol error: {0}")]
    Protocol(String),
    #[error("chat provider refused the request: {0}")]
    Refused(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderMessage {
    pub role: String,
    pub content: String,
}

impl ProviderMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        let role = match role {
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        };
        Self { role: role.to_string(), content: content.into() }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self { role: "system".to_string(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ProviderMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    /// All message contents joined by newlines.
    pub fn flattened(&self) -> String {
        self.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n")
    }
}

/// A chat-completion backend. One call per turn.
pub trait ChatProvider: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError>;

    fn probe(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptedOutput {
    Text(String),
    Fail(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptedRule {
    pub pattern: String,
    pub output: ScriptedOutput,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    pattern: String,
    #[serde(default)]
    output: Option<String>,
    #[serde(default)]
    fail: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScript {
    rules: Vec<RawRule>,
    fallback: String,
}

/// Deterministic provider: the first rule whose pattern occurs in the
/// flattened prompt decides the output; otherwise the fallback is returned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptedProvider {
    rules: Vec<ScriptedRule>,
    fallback: String,
}

impl ScriptedProvider {
    pub fn new(rules: Vec<ScriptedRule>, fallback: impl Into<String>) -> Self {
        Self { rules, fallback: fallback.into() }
    }

    /// Parses `{"rules": [{"pattern", "output"} | {"pattern", "fail"}], "fallback"}`.
    pub fn from_json(text: &str) -> Result<Self, String> {
        let raw: RawScript = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let rules = raw
            .rules
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                let output = match (r.output, r.fail) {
                    (Some(text), None) => ScriptedOutput::Text(text),
                    (None, Some(msg)) => ScriptedOutput::Fail(msg),
                    _ => return Err(format!("rule {i} must have exactly one of \"output\" and \"fail\"")),
                };
                Ok(ScriptedRule { pattern: r.pattern, output })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { rules, fallback: raw.fallback })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

impl ChatProvider for ScriptedProvider {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let prompt = request.flattened();
        match self.rules.iter().find(|r| prompt.contains(&r.pattern)).map(|r| &r.output) {
            Some(ScriptedOutput::Text(t)) => Ok(t.clone()),
            Some(ScriptedOutput::Fail(m)) => Err(ProviderError::Transport { status: Some(503), message: m.clone() }),
            None => Ok(self.fallback.clone()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpChatSettings {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    60
}

/// Client for OpenAI-style chat-completion endpoints.
pub struct HttpChatProvider {
    settings: HttpChatSettings,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl fmt::Debug for HttpChatProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpChatProvider")
            .field("settings", &self.settings)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

#[derive(Serialize)]
struct CompletionBody<'a> {
    model: &'a str,
    messages: &'a [ProviderMessage],
    temperature: f64,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: String,
}

impl HttpChatProvider {
    pub fn new(settings: HttpChatSettings) -> Result<Self, ProviderError> {
        let api_key = settings.api_key_env.as_deref().and_then(|v| std::env::var(v).ok());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(settings.timeout_secs))
            .build()
            .map_err(|e| ProviderError::Transport { status: None, message: e.to_string() })?;
        Ok(Self { settings, api_key, client })
    }
}

impl ChatProvider for HttpChatProvider {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let body =
            CompletionBody { model: &self.settings.model, messages: &request.messages, temperature: request.temperature };
        let mut req = self.client.post(&self.settings.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ProviderError::Transport {
            status: e.status().map(|s| s.as_u16()),
            message: e.without_url().to_string(),
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ProviderError::Transport {
                status: Some(status.as_u16()),
                message: format!("chat endpoint answered {status}"),
            });
        }
        let parsed: CompletionResponse = resp.json().map_err(|e| ProviderError::Protocol(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ProviderError::Protocol("response has no choices".into()))
    }

    fn probe(&self) -> bool {
        crate::net::probe_endpoint(&self.settings.endpoint, Duration::from_secs(2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(text: &str) -> ChatRequest {
        ChatRequest { messages: vec![ProviderMessage::system("sys"), ProviderMessage::new(Role::User, text)], temperature: 0.2 }
    }

    #[test]
    fn first_matching_rule_wins() {
        let p = ScriptedProvider::from_json(
            r#"{"rules": [{"pattern": "atrophy", "output": "A"}, {"pattern": "macular atrophy", "output": "B"}],
                "fallback": "F"}"#,
        )
        .unwrap();
        assert_eq!(p.complete(&req("Is macular atrophy serious?")).unwrap(), "A");
        assert_eq!(p.complete(&req("What is myopia?")).unwrap(), "F");
    }

    #[test]
    fn fail_rules_produce_errors() {
        let p = ScriptedProvider::from_json(r#"{"rules": [{"pattern": "boom", "fail": "down"}], "fallback": "F"}"#)
            .unwrap();
        assert!(matches!(p.complete(&req("boom")), Err(ProviderError::Transport { .. })));
    }

    #[test]
    fn rule_needs_exactly_one_outcome() {
        assert!(ScriptedProvider::from_json(r#"{"rules": [{"pattern": "x"}], "fallback": ""}"#).is_err());
        assert!(ScriptedProvider::from_json(r#"{"rules": [{"pattern": "x", "output": "a", "fail": "b"}], "fallback": ""}"#)
            .is_err());
    }

    #[test]
    fn debug_output_redacts_the_key() {
        std::env::set_var("MYOPIA_TEST_CHAT_KEY", "sk-very-secret");
        let p = HttpChatProvider::new(HttpChatSettings {
            endpoint: "http://127.0.0.1:9/v1/chat/completions".into(),
            model: "m".into(),
            api_key_env: Some("MYOPIA_TEST_CHAT_KEY".into()),
            timeout_secs: 1,
        })
        .unwrap();
        let dbg = format!("{p:?}");
        assert!(!dbg.contains("sk-very-secret"));
        assert!(dbg.contains("MYOPIA_TEST_CHAT_KEY"));
    }
}
