use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use chrono::Utc;
use myopia_core::agent::{
    Agent, AgentError, ChatMessage, ChatProvider, ChatSession, HttpChatProvider, PromptTemplates, Role, ScriptedProvider,
    ToolSet, ToolTrace, KnowledgeTool, TurnInput, AgentResponse,
};
use myopia_core::imagetool::{ClassifierBackend, FixtureBackend, FundusImage, HttpClassifier};
use myopia_core::kbindex::{
    load_index, EmbeddingProvider, HttpEmbeddingProvider, HttpEmbeddingSettings, KnowledgeIndex, MockEmbedder,
};
use myopia_core::Language;
use serde::Serialize;

use crate::config::{ChatBackendConfig, ClassifierBackendConfig, ConfigError, EmbeddingBackendConfig, ServiceConfig};
use crate::store::{Entry, StoreError, TranscriptRecord, TranscriptStore};

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot load {language} index {path}: {message}")]
    Index { language: Language, path: String, message: String },
    #[error("{language} index was built with embedder {index} but the service is configured with {configured}")]
    EmbedderMismatch { language: Language, index: String, configured: String },
    #[error("{0}")]
    Provider(String),
    #[error(transparent)]
    Templates(#[from] AgentError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Points in a turn where tests can inject a simulated crash.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultPoint {
    /// The agent has answered; nothing is written yet.
    BeforeAppend,
    /// The turn is durably written; the client has not been answered.
    AfterAppend,
}

/// Returns true to crash the turn at the given point. Arguments are the point,
/// the session id and the sequence number of the turn's first record.
pub type FaultHook = Arc<dyn Fn(FaultPoint, &str, u64) -> bool + Send + Sync>;

pub(crate) struct SessionSlot {
    pub session: ChatSession,
    pub next_seq: u64,
    pub deleted: bool,
}

impl SessionSlot {
    fn from_records(records: &[TranscriptRecord]) -> Option<Self> {
        let first = records.first()?;
        let Entry::Created { language } = first.entry else {
            return None;
        };
        let mut history = Vec::new();
        let mut deleted = false;
        for r in records {
            match &r.entry {
                Entry::Message { message, .. } => history.push(message.clone()),
                Entry::Deleted => deleted = true,
                Entry::Created { .. } | Entry::FailedTurn { .. } => {}
            }
        }
        let next_seq = records.last().map_or(1, |r| r.seq + 1);
        Some(Self {
            session: ChatSession::restore(first.session_id.clone(), language, first.timestamp, history),
            next_seq,
            deleted,
        })
    }
}

pub(crate) type SlotHandle = Arc<tokio::sync::Mutex<Option<SessionSlot>>>;

#[derive(Debug, Clone, Serialize)]
pub struct ProviderHealth {
    pub backend: String,
    pub reachable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub(crate) struct ProbeReport {
    pub chat: ProviderHealth,
    pub embedding: BTreeMap<Language, ProviderHealth>,
    pub classifier: Option<ProviderHealth>,
}

pub struct AppState {
    pub config: ServiceConfig,
    pub(crate) agent: Agent,
    pub(crate) store: TranscriptStore,
    pub(crate) indexes: BTreeMap<Language, KnowledgeIndex>,
    pub(crate) chat: Box<dyn ChatProvider>,
    pub(crate) embedders: BTreeMap<Language, Box<dyn EmbeddingProvider>>,
    pub(crate) classifier: Option<Box<dyn ClassifierBackend>>,
    pub(crate) clinic_token: Option<String>,
    sessions: Mutex<HashMap<String, SlotHandle>>,
    probe_cache: Mutex<Option<(Instant, ProbeReport)>>,
    fault_hook: Option<FaultHook>,
}

impl std::fmt::Debug for AppState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AppState")
            .field("listen", &self.config.listen)
            .field("indexes", &self.indexes.keys().collect::<Vec<_>>())
            .field("chat", &self.chat.name())
            .finish_non_exhaustive()
    }
}

pub(crate) enum TurnOutcome {
    Answered { user_seq: u64, assistant_seq: u64, response: AgentResponse },
    ProviderFailed { seq: u64, message: String, trace: ToolTrace },
}

#[derive(Debug, thiserror::Error)]
pub(crate) enum TurnError {
    #[error("{0}")]
    Rejected(String),
    #[error("{0}")]
    Internal(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("injected fault")]
    Injected,
}

impl AppState {
    /// Builds the state from a validated configuration. Must not run on an
    /// async executor thread: the HTTP clients it creates are blocking.
    pub fn from_config(config: ServiceConfig) -> Result<Self, StartupError> {
        config.check_paths()?;
        let templates = match &config.template_dir {
            Some(dir) => PromptTemplates::load_root(dir)?,
            None => PromptTemplates::builtin(),
        };
        let chat: Box<dyn ChatProvider> = match &config.chat {
            ChatBackendConfig::Scripted { script } => {
                Box::new(ScriptedProvider::load(script).map_err(StartupError::Provider)?)
            }
            ChatBackendConfig::Http(h) => {
                Box::new(HttpChatProvider::new(h.settings()).map_err(|e| StartupError::Provider(e.to_string()))?)
            }
        };
        let mut embedders: BTreeMap<Language, Box<dyn EmbeddingProvider>> = BTreeMap::new();
        for language in Language::ALL {
            let e: Box<dyn EmbeddingProvider> = match &config.embedding {
                EmbeddingBackendConfig::Mock => Box::new(MockEmbedder::new(language)),
                EmbeddingBackendConfig::Http { endpoint, model, dim, api_key_env, timeout_secs } => {
                    Box::new(
                        HttpEmbeddingProvider::new(HttpEmbeddingSettings {
                            endpoint: endpoint.clone(),
                            model: model.clone(),
                            dim: *dim,
                            language,
                            api_key_env: api_key_env.clone(),
                            timeout_secs: timeout_secs.unwrap_or(30),
                        })
                        .map_err(|e| StartupError::Provider(e.to_string()))?,
                    )
                }
            };
            embedders.insert(language, e);
        }
        let classifier: Option<Box<dyn ClassifierBackend>> = match &config.classifier {
            None => None,
            Some(ClassifierBackendConfig::Fixture { sidecar }) => {
                Some(Box::new(FixtureBackend::load(sidecar).map_err(StartupError::Provider)?))
            }
            Some(c @ ClassifierBackendConfig::Http { .. }) => Some(Box::new(
                HttpClassifier::new(c.http_settings().expect("http variant"))
                    .map_err(|e| StartupError::Provider(e.to_string()))?,
            )),
        };
        let mut indexes = BTreeMap::new();
        for (language, path) in [(Language::En, &config.indexes.en), (Language::Zh, &config.indexes.zh)] {
            let Some(path) = path else { continue };
            let index = load_index(path).map_err(|e| StartupError::Index {
                language,
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            let configured = embedders[&language].fingerprint();
            if index.fingerprint() != configured {
                return Err(StartupError::EmbedderMismatch {
                    language,
                    index: index.fingerprint().to_string(),
                    configured,
                });
            }
            indexes.insert(language, index);
        }
        let clinic_token = config.clinic_token_env.as_deref().and_then(|v| std::env::var(v).ok()).filter(|t| !t.is_empty());
        if config.clinic_token_env.is_some() && clinic_token.is_none() {
            return Err(StartupError::Provider(format!(
                "clinic token variable {} is not set",
                config.clinic_token_env.as_deref().unwrap_or_default()
            )));
        }
        let store = TranscriptStore::open(&config.session_store)?;
        Ok(Self {
            agent: Agent::new(config.agent.clone(), templates),
            config,
            store,
            indexes,
            chat,
            embedders,
            classifier,
            clinic_token,
            sessions: Mutex::new(HashMap::new()),
            probe_cache: Mutex::new(None),
            fault_hook: None,
        })
    }

    pub fn with_fault_hook(mut self, hook: FaultHook) -> Self {
        self.fault_hook = Some(hook);
        self
    }

    pub fn store(&self) -> &TranscriptStore {
        &self.store
    }

    fn fault(&self, point: FaultPoint, session_id: &str, seq: u64) -> bool {
        self.fault_hook.as_ref().is_some_and(|h| h(point, session_id, seq))
    }

    fn handle(&self, session_id: &str) -> SlotHandle {
        self.sessions.lock().expect("session map").entry(session_id.to_string()).or_default().clone()
    }

    fn evict(&self, session_id: &str) {
        self.sessions.lock().expect("session map").remove(session_id);
    }

    /// Locks a session, loading it from disk on first use. Unknown ids yield
    /// `None` without creating anything on disk.
    pub(crate) async fn lock_session(
        self: &Arc<Self>,
        session_id: &str,
    ) -> Result<Option<tokio::sync::OwnedMutexGuard<Option<SessionSlot>>>, StoreError> {
        if !crate::store::valid_session_id(session_id) {
            return Ok(None);
        }
        let mut guard = self.handle(session_id).lock_owned().await;
        if guard.is_none() {
            let this = self.clone();
            let id = session_id.to_string();
            let records = tokio::task::spawn_blocking(move || this.store.load(&id))
                .await
                .map_err(|e| StoreError::Io(std::io::Error::other(e.to_string())))??;
            match records.as_deref().and_then(SessionSlot::from_records) {
                Some(slot) => *guard = Some(slot),
                None => {
                    drop(guard);
                    self.evict(session_id);
                    return Ok(None);
                }
            }
        }
        if guard.as_ref().is_some_and(|s| s.deleted) {
            return Ok(None);
        }
        Ok(Some(guard))
    }

    pub(crate) fn create_session(&self, language: Language) -> Result<TranscriptRecord, StoreError> {
        loop {
            let id = uuid::Uuid::new_v4().simple().to_string();
            match self.store.create(&id, language, Utc::now()) {
                Err(StoreError::Exists(_)) => continue,
                other => return other,
            }
        }
    }

    pub(crate) fn delete_session(&self, slot: &mut SessionSlot) -> Result<(), StoreError> {
        let record = TranscriptRecord {
            session_id: slot.session.session_id.clone(),
            seq: slot.next_seq,
            timestamp: Utc::now(),
            entry: Entry::Deleted,
        };
        self.store.append(&[record])?;
        slot.next_seq += 1;
        slot.deleted = true;
        Ok(())
    }

    /// Runs one turn and persists it before returning. Blocking.
    pub(crate) fn run_turn(&self, slot: &mut SessionSlot, input: TurnInput) -> Result<TurnOutcome, TurnError> {
        let language = slot.session.language;
        let tools = ToolSet {
            knowledge: self
                .indexes
                .get(&language)
                .map(|index| KnowledgeTool { index, embedder: self.embedders[&language].as_ref() }),
            classifier: self.classifier.as_deref(),
        };
        let id = slot.session.session_id.clone();
        let seq = slot.next_seq;
        let mut working = slot.session.clone();
        let user_for_failure = input.clone();
        match self.agent.run_turn(&mut working, input, &tools, self.chat.as_ref()) {
            Ok(response) => {
                let n = working.history().len();
                let (user, assistant) = (working.history()[n - 2].clone(), working.history()[n - 1].clone());
                debug_assert_eq!((user.role, assistant.role), (Role::User, Role::Assistant));
                let records = [
                    TranscriptRecord {
                        session_id: id.clone(),
                        seq,
                        timestamp: user.timestamp,
                        entry: Entry::Message { message: user, trace: None },
                    },
                    TranscriptRecord {
                        session_id: id.clone(),
                        seq: seq + 1,
                        timestamp: assistant.timestamp,
                        entry: Entry::Message { message: assistant, trace: Some(response.trace.clone()) },
                    },
                ];
                if self.fault(FaultPoint::BeforeAppend, &id, seq) {
                    self.evict(&id);
                    return Err(TurnError::Injected);
                }
                self.store.append(&records)?;
                if self.fault(FaultPoint::AfterAppend, &id, seq) {
                    self.evict(&id);
                    return Err(TurnError::Injected);
                }
                slot.session = working;
                slot.next_seq = seq + 2;
                tracing::info!(session_id = %id, seq, degraded = response.trace.degraded, "turn answered");
                Ok(TurnOutcome::Answered { user_seq: seq, assistant_seq: seq + 1, response })
            }
            Err(AgentError::Provider { source: e, trace }) => {
                let attachment = user_for_failure.image.as_ref().map(|img| myopia_core::agent::Attachment {
                    reference: img.reference.clone(),
                    content_hash: img.content_hash(),
                });
                let message = ChatMessage::user(user_for_failure.text, attachment);
                let record = TranscriptRecord {
                    session_id: id.clone(),
                    seq,
                    timestamp: message.timestamp,
                    entry: Entry::FailedTurn { message, error: e.to_string(), trace: Some((*trace).clone()) },
                };
                self.store.append(&[record])?;
                slot.next_seq = seq + 1;
                tracing::warn!(session_id = %id, seq, "chat provider failed");
                Ok(TurnOutcome::ProviderFailed { seq, message: e.to_string(), trace: *trace })
            }
            Err(AgentError::RejectedTurn(m)) => Err(TurnError::Rejected(m)),
            Err(AgentError::Config(m)) => Err(TurnError::Internal(m)),
        }
    }

    /// Validates and stores an uploaded image. Blocking.
    pub(crate) fn accept_image(&self, image: &FundusImage) -> Result<(), TurnError> {
        let format = image.validate_decodable().map_err(|e| TurnError::Rejected(e.to_string()))?;
        self.store.put_image(&image.content_hash(), format.extension(), &image.bytes)?;
        Ok(())
    }

    /// Reachability of every provider, re-probed at most every `probe_ttl_secs`.
    pub(crate) async fn probe(self: &Arc<Self>) -> ProbeReport {
        let ttl = Duration::from_secs(self.config.probe_ttl_secs);
        if let Some((at, report)) = self.probe_cache.lock().expect("probe cache").as_ref() {
            if at.elapsed() < ttl {
                return report.clone();
            }
        }
        let this = self.clone();
        let task = tokio::task::spawn_blocking(move || ProbeReport {
            chat: ProviderHealth { backend: this.chat.name().to_string(), reachable: this.chat.probe() },
            embedding: this
                .embedders
                .iter()
                .map(|(l, e)| (*l, ProviderHealth { backend: e.fingerprint(), reachable: e.probe() }))
                .collect(),
            classifier: this
                .classifier
                .as_ref()
                .map(|c| ProviderHealth { backend: c.name().to_string(), reachable: c.probe() }),
        });
        let report = match tokio::time::timeout(Duration::from_secs(5), task).await {
            Ok(Ok(r)) => r,
            _ => ProbeReport {
                chat: ProviderHealth { backend: self.chat.name().to_string(), reachable: false },
                embedding: self
                    .embedders
                    .iter()
                    .map(|(l, e)| (*l, ProviderHealth { backend: e.fingerprint(), reachable: false }))
                    .collect(),
                classifier: self
                    .classifier
                    .as_ref()
                    .map(|c| ProviderHealth { backend: c.name().to_string(), reachable: false }),
            },
        };
        *self.probe_cache.lock().expect("probe cache") = Some((Instant::now(), report.clone()));
        report
    }
}
