use super::{AgentError, ChatMessage, ChatSession, Role, ToolCallDecision};

/// Decides which tools a user turn needs. Implementations must return
/// `GradeImage` only for turns with an attachment.
pub trait Router: Send + Sync {
    fn route(&self, turn: &ChatMessage, session: &ChatSession) -> Result<Vec<ToolCallDecision>, AgentError>;
}

/// Fixed rules: an attachment is always graded, and knowledge is always retrieved.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleRouter;

impl Router for RuleRouter {
    fn route(&self, turn: &ChatMessage, session: &ChatSession) -> Result<Vec<ToolCallDecision>, AgentError> {
        route(turn, session)
    }
}

pub fn route(turn: &ChatMessage, _session: &ChatSession) -> Result<Vec<ToolCallDecision>, AgentError> {
    if turn.role != Role::User {
        return Err(AgentError::RejectedTurn("only user messages can be routed".into()));
    }
    let text = turn.text.trim();
    match &turn.attachment {
        Some(att) => Ok(vec![
            ToolCallDecision::GradeImage { image_ref: att.reference.clone() },
            ToolCallDecision::RetrieveKnowledge { query: text.to_string(), append_grade_label: true },
        ]),
        None if text.is_empty() => Err(AgentError::RejectedTurn("empty message without an image".into())),
        None => Ok(vec![ToolCallDecision::RetrieveKnowledge { query: text.to_string(), append_grade_label: false }]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::Attachment;
    use crate::Language;

    fn session() -> ChatSession {
        ChatSession::new("s", Language::En)
    }

    fn att() -> Option<Attachment> {
        Some(Attachment { reference: "img-1".into(), content_hash: "00".into() })
    }

    #[test]
    fn text_only_retrieves() {
        let d = route(&ChatMessage::user("What is myopia?", None), &session()).unwrap();
        assert_eq!(
            d,
            vec![ToolCallDecision::RetrieveKnowledge { query: "What is myopia?".into(), append_grade_label: false }]
        );
    }

    #[test]
    fn image_grades_before_retrieval() {
        let d = route(&ChatMessage::user("what does my photo show?", att()), &session()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d[0], ToolCallDecision::GradeImage { image_ref: "img-1".into() });
        assert!(matches!(&d[1], ToolCallDecision::RetrieveKnowledge { append_grade_label: true, .. }));
    }

    #[test]
    fn image_with_empty_text_still_routes() {
        let d = route(&ChatMessage::user("  ", att()), &session()).unwrap();
        assert_eq!(d[1], ToolCallDecision::RetrieveKnowledge { query: String::new(), append_grade_label: true });
    }

    #[test]
    fn empty_turn_is_rejected() {
        assert!(matches!(route(&ChatMessage::user(" ", None), &session()), Err(AgentError::RejectedTurn(_))));
        assert!(matches!(route(&ChatMessage::assistant("hi"), &session()), Err(AgentError::RejectedTurn(_))));
    }
}
