#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use myopia_core::kbindex::{build_index, load_corpus_dir, save_index, MockEmbedder, DEFAULT_CHUNK_SIZE};
use myopia_core::Language;
use myopia_service::{AppState, BackgroundServer, FaultHook, ServiceConfig};
use serde_json::Value;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub const ANSWER: &str = "Outdoor time and low-dose atropine both slow myopia progression [1].\n\
---FOLLOW-UP---\n\
1. How much outdoor time is enough\n\
2. Are atropine drops safe for children?\n";

pub const SCRIPT: &str = r#"{
  "rules": [
    {"pattern": "PROVIDER-DOWN", "fail": "upstream unavailable"}
  ],
  "fallback": "Outdoor time and low-dose atropine both slow myopia progression [1].\n---FOLLOW-UP---\n1. How much outdoor time is enough\n2. Are atropine drops safe for children?\n"
}"#;

/// Builds mock-embedder indexes for the fixture corpora into `dir`.
pub fn build_indexes(dir: &Path) -> (PathBuf, PathBuf) {
    let mut out = Vec::new();
    for lang in [Language::En, Language::Zh] {
        let docs = load_corpus_dir(&fixtures().join("corpus").join(lang.as_str())).unwrap();
        let index = build_index(&docs, &MockEmbedder::new(lang), DEFAULT_CHUNK_SIZE, 0).unwrap();
        let path = dir.join(format!("{lang}.mkdx"));
        save_index(&index, &path).unwrap();
        out.push(path);
    }
    (out[0].clone(), out[1].clone())
}

pub struct Options {
    pub zh_index: bool,
    pub classifier: bool,
    pub max_image_bytes: usize,
    pub extra: String,
    pub chat: Option<String>,
}

impl Default for Options {
    fn default() -> Self {
        Self { zh_index: true, classifier: true, max_image_bytes: 1 << 20, extra: String::new(), chat: None }
    }
}

/// A service over a temporary store, restartable against the same files.
pub struct Harness {
    pub dir: tempfile::TempDir,
    pub config_path: PathBuf,
    pub server: Option<BackgroundServer>,
    pub state: Option<Arc<AppState>>,
    pub client: reqwest::blocking::Client,
    hook: Option<FaultHook>,
}

impl Harness {
    pub fn start(opts: Options) -> Self {
        Self::start_with_hook(opts, None)
    }

    pub fn start_with_hook(opts: Options, hook: Option<FaultHook>) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let (en, zh) = build_indexes(dir.path());
        std::fs::write(dir.path().join("script.json"), SCRIPT).unwrap();
        let mut toml = format!(
            "listen = \"127.0.0.1:0\"\nsession_store = \"sessions\"\nmax_image_bytes = {}\n{}\n[indexes]\nen = {:?}\n",
            opts.max_image_bytes, opts.extra, en
        );
        if opts.zh_index {
            toml.push_str(&format!("zh = {zh:?}\n"));
        }
        match &opts.chat {
            Some(chat) => toml.push_str(chat),
            None => toml.push_str("[chat]\nkind = \"scripted\"\nscript = \"script.json\"\n"),
        }
        if opts.classifier {
            toml.push_str(&format!(
                "[classifier]\nkind = \"fixture\"\nsidecar = {:?}\n",
                fixtures().join("grading_sidecar.csv")
            ));
        }
        let config_path = dir.path().join("service.toml");
        std::fs::write(&config_path, toml).unwrap();
        let client = reqwest::blocking::Client::builder().timeout(std::time::Duration::from_secs(30)).build().unwrap();
        let mut h = Self { dir, config_path, server: None, state: None, client, hook };
        h.boot();
        h
    }

    fn boot(&mut self) {
        let cfg = ServiceConfig::load(&self.config_path).unwrap();
        let mut state = AppState::from_config(cfg).unwrap();
        if let Some(hook) = &self.hook {
            state = state.with_fault_hook(hook.clone());
        }
        let state = Arc::new(state);
        self.server = Some(BackgroundServer::start(state.clone(), "127.0.0.1:0").unwrap());
        self.state = Some(state);
    }

    /// Simulates a process crash: the server and all in-memory state are
    /// dropped and rebuilt from the configuration and the store on disk.
    pub fn restart(&mut self) {
        if let Some(s) = self.server.take() {
            s.stop().unwrap();
        }
        self.state = None;
        self.boot();
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.server.as_ref().unwrap().base_url(), path)
    }

    pub fn store_dir(&self) -> PathBuf {
        self.dir.path().join("sessions")
    }

    pub fn create(&self, language: &str) -> String {
        let r = self.client.post(self.url("/api/sessions")).json(&serde_json::json!({"language": language})).send().unwrap();
        assert_eq!(r.status(), 201);
        r.json::<Value>().unwrap()["session_id"].as_str().unwrap().to_string()
    }

    pub fn turn(&self, session: &str, text: &str) -> reqwest::blocking::Response {
        let form = reqwest::blocking::multipart::Form::new().text("text", text.to_string());
        self.client.post(self.url(&format!("/api/sessions/{session}/turns"))).multipart(form).send().unwrap()
    }

    pub fn image_turn(&self, session: &str, text: &str, name: &str, bytes: Vec<u8>) -> reqwest::blocking::Response {
        let part = reqwest::blocking::multipart::Part::bytes(bytes).file_name(name.to_string());
        let form = reqwest::blocking::multipart::Form::new().text("text", text.to_string()).part("image", part);
        self.client.post(self.url(&format!("/api/sessions/{session}/turns"))).multipart(form).send().unwrap()
    }

    pub fn get(&self, path: &str) -> reqwest::blocking::Response {
        self.client.get(self.url(path)).send().unwrap()
    }

    pub fn records(&self, session: &str) -> Vec<Value> {
        let r = self.get(&format!("/api/sessions/{session}"));
        assert_eq!(r.status(), 200);
        r.json::<Value>().unwrap()["records"].as_array().unwrap().clone()
    }
}

impl Drop for Harness {
    fn drop(&mut self) {
        if let Some(s) = self.server.take() {
            let _ = s.stop();
        }
    }
}
