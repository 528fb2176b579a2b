use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::imagetool::GradeLabel;
use crate::Language;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
    Tool,
}

/// Reference to an uploaded fundus photograph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    pub reference: String,
    pub content_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attachment: Option<Attachment>,
    /// Set on tool messages only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_name: Option<String>,
    pub timestamp: DateTime<Utc>,
}

impl ChatMessage {
    pub fn user(text: impl Into<String>, attachment: Option<Attachment>) -> Self {
        Self { role: Role::User, text: text.into(), attachment, tool_name: None, timestamp: Utc::now() }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self { role: Role::Assistant, text: text.into(), attachment: None, tool_name: None, timestamp: Utc::now() }
    }

    pub fn tool(tool_name: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            role: Role::Tool,
            text: text.into(),
            attachment: None,
            tool_name: Some(tool_name.into()),
            timestamp: Utc::now(),
        }
    }
}

/// Conversation state. History is append-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatSession {
    pub session_id: String,
    pub language: Language,
    pub created_at: DateTime<Utc>,
    history: Vec<ChatMessage>,
}

impl ChatSession {
    pub fn new(session_id: impl Into<String>, language: Language) -> Self {
        Self { session_id: session_id.into(), language, created_at: Utc::now(), history: Vec::new() }
    }

    /// Rebuilds a session from persisted parts.
    pub fn restore(
        session_id: impl Into<String>,
        language: Language,
        created_at: DateTime<Utc>,
        history: Vec<ChatMessage>,
    ) -> Self {
        Self { session_id: session_id.into(), language, created_at, history }
    }

    pub fn history(&self) -> &[ChatMessage] {
        &self.history
    }

    pub fn append(&mut self, message: ChatMessage) {
        self.history.push(message);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    RetrieveKnowledge,
    GradeImage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tool", rename_all = "snake_case")]
pub enum ToolCallDecision {
    GradeImage {
        image_ref: String,
    },
    /// `query` is the user text; with `append_grade_label` the grading
    /// result's display name is appended once grading has run.
    RetrieveKnowledge {
        query: String,
        append_grade_label: bool,
    },
}

impl ToolCallDecision {
    pub fn kind(&self) -> ToolKind {
        match self {
            ToolCallDecision::GradeImage { .. } => ToolKind::GradeImage,
            ToolCallDecision::RetrieveKnowledge { .. } => ToolKind::RetrieveKnowledge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHit {
    pub rank: usize,
    pub tag: String,
    pub doc_id: String,
    pub chunk_index: u32,
    pub score: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradingTrace {
    pub image_ref: String,
    pub probs: [f64; 5],
    pub label: GradeLabel,
    pub display_name: String,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolFailure {
    pub tool: ToolKind,
    pub message: String,
}

/// Everything the agent did for one turn.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ToolTrace {
    pub decisions: Vec<ToolCallDecision>,
    /// Query actually sent to retrieval, after label expansion.
    pub retrieval_query: Option<String>,
    pub hits: Vec<TraceHit>,
    pub grading: Option<GradingTrace>,
    pub failures: Vec<ToolFailure>,
    /// A tool failed or retrieval returned nothing.
    pub degraded: bool,
    /// The provider output carried no parsable follow-ups; defaults were used.
    pub followups_fallback: bool,
    /// Citation tags removed from the answer because no hit backs them.
    pub dropped_citations: Vec<String>,
    /// Hex SHA-256 of the provider request.
    pub prompt_fingerprint: String,
}

impl ToolTrace {
    pub fn resolves(&self, tag: &str) -> bool {
        if let Some(n) = tag.strip_prefix('[').and_then(|t| t.strip_suffix(']')).and_then(|t| t.parse::<usize>().ok())
        {
            return n >= 1 && n <= self.hits.len();
        }
        self.hits.iter().any(|h| h.tag == tag)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub answer: String,
    pub suggested_questions: Vec<String>,
    pub trace: ToolTrace,
}
