//! Turn orchestration: route a user turn to the grading and knowledge tools,
//! assemble the provider prompt, call the chat-completion provider once and
//! return the answer with follow-up suggestions and a full tool trace.

mod followups;
mod prompt;
mod provider;
mod route;
mod run;
mod templates;
mod types;

pub use followups::{normalize_question, parse_followups, ParsedFollowups, FOLLOW_UP_DELIMITER, MAX_SUGGESTIONS};
pub use prompt::{build_prompt, prompt_fingerprint, DEFAULT_HISTORY_WINDOW};
pub use provider::{
    ChatProvider, ChatRequest, HttpChatProvider, HttpChatSettings, ProviderError, ProviderMessage, ScriptedOutput,
    ScriptedProvider, ScriptedRule, DEFAULT_TEMPERATURE,
};
pub use route::{route, Router, RuleRouter};
pub use run::{extract_citations, Agent, AgentConfig, KnowledgeTool, ToolSet, TurnInput};
pub use templates::{PromptTemplates, TemplateSet};
pub use types::{
    AgentResponse, Attachment, ChatMessage, ChatSession, GradingTrace, Role, ToolCallDecision, ToolFailure,
    ToolKind, ToolTrace, TraceHit,
};

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("rejected turn: {0}")]
    RejectedTurn(String),
    #[error("configuration error: {0}")]
    Config(String),
    /// The chat provider failed after the tools ran; `trace` holds their results.
    #[error("{source}")]
    Provider { source: ProviderError, trace: Box<ToolTrace> },
}
