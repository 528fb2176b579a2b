use sha2::{Digest, Sha256};

use super::{AgentError, ChatMessage, ChatRequest, PromptTemplates, ProviderMessage, Role};
use crate::kbindex::{render_context, RetrievalHit};
use crate::Language;

pub const DEFAULT_HISTORY_WINDOW: usize = 6;

/// Assembles `[system, context?, last H history messages, question]`.
///
/// The context message is present when there are hits or a grading summary.
/// Without hits the no-context instruction is appended to the system message.
/// Tool messages in the history are not replayed.
pub fn build_prompt(
    question: &str,
    hits: &[RetrievalHit],
    grading_summary: Option<&str>,
    history: &[ChatMessage],
    history_window: usize,
    language: Language,
    templates: &PromptTemplates,
) -> Result<Vec<ProviderMessage>, AgentError> {
    let t = templates.get(language)?;
    let mut messages = Vec::new();
    if hits.is_empty() {
        messages.push(ProviderMessage::system(format!("{}\n\n{}", t.system, t.no_context)));
    } else {
        messages.push(ProviderMessage::system(t.system.clone()));
    }

    let mut context = Vec::new();
    if !hits.is_empty() {
        context.push(t.context.replacen("{context}", &render_context(hits), 1));
    }
    if let Some(summary) = grading_summary {
        context.push(t.grading.replacen("{grading}", summary, 1));
    }
    if !context.is_empty() {
        messages.push(ProviderMessage::system(context.join("\n").trim_end().to_string()));
    }

    let replayable: Vec<&ChatMessage> = history.iter().filter(|m| m.role != Role::Tool).collect();
    let start = replayable.len().saturating_sub(history_window);
    messages.extend(replayable[start..].iter().map(|m| ProviderMessage::new(m.role, m.text.clone())));
    messages.push(ProviderMessage::new(Role::User, question));
    Ok(messages)
}

/// Hex SHA-256 of the request's canonical JSON form.
pub fn prompt_fingerprint(request: &ChatRequest) -> String {
    let bytes = serde_json::to_vec(request).expect("chat requests serialize");
    hex::encode(Sha256::digest(bytes))
}
