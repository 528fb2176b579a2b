use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{
    build_prompt, parse_followups, prompt_fingerprint, AgentError, AgentResponse, Attachment, ChatMessage,
    ChatProvider, ChatRequest, ChatSession, GradingTrace, PromptTemplates, Router, RuleRouter, ToolCallDecision,
    ToolFailure, ToolKind, ToolTrace, TraceHit, DEFAULT_HISTORY_WINDOW, DEFAULT_TEMPERATURE,
};
use crate::imagetool::{classify, grade_report, ClassifierBackend, FundusImage};
use crate::kbindex::{retrieve, EmbeddingProvider, KnowledgeIndex, RetrievalHit, DEFAULT_K};
use crate::Language;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub k: usize,
    pub history_window: usize,
    pub temperature: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self { k: DEFAULT_K, history_window: DEFAULT_HISTORY_WINDOW, temperature: DEFAULT_TEMPERATURE }
    }
}

#[derive(Clone, Copy)]
pub struct KnowledgeTool<'a> {
    pub index: &'a KnowledgeIndex,
    pub embedder: &'a dyn EmbeddingProvider,
}

/// Tools available for one turn. A missing tool is reported as a tool failure.
#[derive(Clone, Copy, Default)]
pub struct ToolSet<'a> {
    pub knowledge: Option<KnowledgeTool<'a>>,
    pub classifier: Option<&'a dyn ClassifierBackend>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TurnInput {
    pub text: String,
    pub image: Option<FundusImage>,
}

impl TurnInput {
    pub fn text(text: impl Into<String>) -> Self {
        Self { text: text.into(), image: None }
    }

    pub fn with_image(text: impl Into<String>, image: FundusImage) -> Self {
        Self { text: text.into(), image: Some(image) }
    }
}

fn citation_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[(?:[A-Za-z0-9_.\-]+:\d+|\d+)\]").expect("valid regex"))
}

/// Citation tags (`[n]` or `[doc_id:chunk]`) in order of appearance.
pub fn extract_citations(text: &str) -> Vec<String> {
    citation_regex().find_iter(text).map(|m| m.as_str().to_string()).collect()
}

fn image_question(language: Language) -> &'static str {
    match language {
        Language::En => "What does my fundus photo show?",
        Language::Zh => "我的眼底照片显示了什么？",
    }
}

pub struct Agent {
    pub config: AgentConfig,
    templates: PromptTemplates,
    router: Box<dyn Router>,
}

impl Default for Agent {
    fn default() -> Self {
        Self::new(AgentConfig::default(), PromptTemplates::builtin())
    }
}

impl Agent {
    pub fn new(config: AgentConfig, templates: PromptTemplates) -> Self {
        Self { config, templates, router: Box::new(RuleRouter) }
    }

    pub fn with_router(mut self, router: Box<dyn Router>) -> Self {
        self.router = router;
        self
    }

    pub fn templates(&self) -> &PromptTemplates {
        &self.templates
    }

    /// Runs one turn. On success the session grows by the user message and the
    /// assistant answer; on any error it is left untouched.
    pub fn run_turn(
        &self,
        session: &mut ChatSession,
        input: TurnInput,
        tools: &ToolSet<'_>,
        provider: &dyn ChatProvider,
    ) -> Result<AgentResponse, AgentError> {
        let language = session.language;
        let templates = self.templates.get(language)?;
        if let Some(img) = &input.image {
            img.validate_decodable().map_err(|e| AgentError::RejectedTurn(e.to_string()))?;
        }
        let attachment = input
            .image
            .as_ref()
            .map(|img| Attachment { reference: img.reference.clone(), content_hash: img.content_hash() });
        let user_msg = ChatMessage::user(input.text.clone(), attachment);
        let decisions = self.router.route(&user_msg, session)?;
        if input.image.is_none() && decisions.iter().any(|d| d.kind() == ToolKind::GradeImage) {
            return Err(AgentError::Config("router asked to grade a turn without an image".into()));
        }

        let mut trace = ToolTrace { decisions: decisions.clone(), ..ToolTrace::default() };
        let mut hits: Vec<RetrievalHit> = Vec::new();
        for decision in &decisions {
            match decision {
                ToolCallDecision::GradeImage { image_ref } => {
                    let image = input.image.as_ref().expect("checked above");
                    let outcome = match tools.classifier {
                        None => Err("no classifier backend configured".to_string()),
                        Some(backend) => classify(image, backend).map_err(|e| e.to_string()),
                    };
                    match outcome {
                        Ok((probs, label)) => {
                            trace.grading = Some(GradingTrace {
                                image_ref: image_ref.clone(),
                                probs: *probs.values(),
                                label,
                                display_name: label.display_name().to_string(),
                                summary: grade_report(&probs, label, &templates.grade_sentences),
                            })
                        }
                        Err(message) => trace.failures.push(ToolFailure { tool: ToolKind::GradeImage, message }),
                    }
                }
                ToolCallDecision::RetrieveKnowledge { query, append_grade_label } => {
                    let mut q = query.trim().to_string();
                    if *append_grade_label {
                        if let Some(g) = &trace.grading {
                            if !q.is_empty() {
                                q.push(' ');
                            }
                            q.push_str(&g.display_name);
                        }
                    }
                    let outcome = match tools.knowledge {
                        None => Err("no knowledge index configured".to_string()),
                        Some(_) if q.is_empty() => Err("no query text available".to_string()),
                        Some(kt) => retrieve(kt.index, &q, self.config.k, kt.embedder).map_err(|e| e.to_string()),
                    };
                    trace.retrieval_query = Some(q);
                    match outcome {
                        Ok(found) => hits = found,
                        Err(message) => {
                            trace.failures.push(ToolFailure { tool: ToolKind::RetrieveKnowledge, message })
                        }
                    }
                }
            }
        }
        trace.hits = hits
            .iter()
            .map(|h| TraceHit {
                rank: h.rank,
                tag: h.citation_tag(),
                doc_id: h.chunk.doc_id.clone(),
                chunk_index: h.chunk.chunk_index,
                score: h.score,
                text: h.chunk.text.clone(),
            })
            .collect();
        let retrieval_requested = decisions.iter().any(|d| d.kind() == ToolKind::RetrieveKnowledge);
        trace.degraded = !trace.failures.is_empty() || (retrieval_requested && hits.is_empty());

        let question = match input.text.trim() {
            "" => image_question(language),
            t => t,
        };
        let messages = build_prompt(
            question,
            &hits,
            trace.grading.as_ref().map(|g| g.summary.as_str()),
            session.history(),
            self.config.history_window,
            language,
            &self.templates,
        )?;
        let request = ChatRequest { messages, temperature: self.config.temperature };
        trace.prompt_fingerprint = prompt_fingerprint(&request);

        let raw = match provider.complete(&request) {
            Ok(raw) => raw,
            Err(source) => return Err(AgentError::Provider { source, trace: Box::new(trace) }),
        };
        let parsed = parse_followups(&raw, language, &templates.default_followups);
        trace.followups_fallback = parsed.fallback;

        let mut answer = parsed.answer;
        for tag in extract_citations(&answer) {
            if !trace.resolves(&tag) && !trace.dropped_citations.contains(&tag) {
                trace.dropped_citations.push(tag);
            }
        }
        for tag in &trace.dropped_citations {
            answer = answer.replace(tag.as_str(), "");
        }

        session.append(user_msg);
        session.append(ChatMessage::assistant(answer.clone()));
        Ok(AgentResponse { answer, suggested_questions: parsed.suggestions, trace })
    }
}
