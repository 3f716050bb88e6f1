//! Service configuration: a TOML file plus `CLARITY_*` environment overrides.
//!
//! ```toml
//! bind = "127.0.0.1:8080"
//! session_dir = "var/sessions"
//! audit_log = "var/audit.jsonl"
//!
//! [llm]
//! endpoint = "http://localhost:9000/complete"
//!
//! [models]
//! emergency = "models/emergency.json"
//! ```
//!
//! Without `[llm]` the service answers from `stub_rules`, or from the
//! bundled demo rules when that is unset too. Missing model paths fall back
//! to the desk-scale models trained from the fixture corpus.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FileSessionStore, Gateway, MemorySessionStore, SessionStore, SessionStoreError};
use crate::adapters::{AdapterError, CompletionBackend, RemoteBackend, RemoteConfig, ScriptedStub, StubError};
use crate::audit::{AuditSink, FileAudit, NullAudit};
use crate::bundle::{load_bundle, BundleError};
use crate::clinical::{clinical_machine, default_clinical_graph, demo_backend, desk_assets, ClinicalAssets, ClinicalConfig, ClinicalServices};
use crate::collector::{StoreError, VectorStore};
use crate::fsm::{load_graph, validate_graph, BindError, DocumentError};
use crate::safety::{BlacklistError, BlacklistTree};

pub const ENV_PREFIX: &str = "CLARITY_";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelPaths {
    pub emergency: Option<PathBuf>,
    pub question: Option<PathBuf>,
    pub readiness: Option<PathBuf>,
    pub relevance: Option<PathBuf>,
    pub blacklist: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub bind: String,
    pub graph: Option<PathBuf>,
    /// In-memory sessions when unset.
    pub session_dir: Option<PathBuf>,
    pub audit_log: Option<PathBuf>,
    /// Question cache file; in-memory when unset.
    pub question_cache: Option<PathBuf>,
    pub stub_rules: Option<PathBuf>,
    pub llm: Option<RemoteConfig>,
    pub models: ModelPaths,
    pub clinical: ClinicalConfig,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            graph: None,
            session_dir: None,
            audit_log: None,
            question_cache: None,
            stub_rules: None,
            llm: None,
            models: ModelPaths::default(),
            clinical: ClinicalConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("graph: {0}")]
    Graph(#[from] DocumentError),
    #[error("graph `{path}` failed validation:\n{report}")]
    Invalid { path: String, report: String },
    #[error("binding graph: {0}")]
    Bind(#[from] BindError),
    #[error("model bundle: {0}")]
    Bundle(#[from] BundleError),
    #[error("blacklist: {0}")]
    Blacklist(#[from] BlacklistError),
    #[error("stub rules: {0}")]
    Stub(#[from] StubError),
    #[error("question cache: {0}")]
    Cache(#[from] StoreError),
    #[error("session store: {0}")]
    Sessions(#[from] SessionStoreError),
    #[error("embedder: {0}")]
    Embedder(#[from] AdapterError),
    #[error("environment variable {name}: {message}")]
    Env { name: String, message: String },
}

impl GatewayConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Applies `CLARITY_*` overrides from `vars`; unrelated names are ignored.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
        for (name, value) in vars {
            let Some(field) = name.strip_prefix(ENV_PREFIX) else { continue };
            let path = || Some(PathBuf::from(&value));
            match field {
                "BIND" => self.bind = value.clone(),
                "GRAPH" => self.graph = path(),
                "SESSION_DIR" => self.session_dir = path(),
                "AUDIT_LOG" => self.audit_log = path(),
                "QUESTION_CACHE" => self.question_cache = path(),
                "STUB_RULES" => self.stub_rules = path(),
                "LLM_ENDPOINT" => match &mut self.llm {
                    Some(llm) => llm.endpoint = value.clone(),
                    None => self.llm = Some(RemoteConfig::new(value.clone())),
                },
                "LLM_API_KEY" => match &mut self.llm {
                    Some(llm) => llm.api_key = Some(value.clone()),
                    None => {
                        return Err(ConfigError::Env { name, message: "set CLARITY_LLM_ENDPOINT as well".into() });
                    }
                },
                "EMERGENCY_MODEL" => self.models.emergency = path(),
                "QUESTION_MODEL" => self.models.question = path(),
                "READINESS_MODEL" => self.models.readiness = path(),
                "RELEVANCE_MODEL" => self.models.relevance = path(),
                "BLACKLIST" => self.models.blacklist = path(),
                _ => {}
            }
        }
        Ok(())
    }

    /// Config file (if any) with the process environment applied on top.
    pub fn resolve(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        let mut vars: Vec<(String, String)> = std::env::vars().collect();
        // Endpoint before key, whatever the environment order.
        vars.sort_by_key(|(name, _)| name != "CLARITY_LLM_ENDPOINT");
        cfg.apply_env(vars)?;
        Ok(cfg)
    }

    pub fn backend(&self) -> Result<Arc<dyn CompletionBackend>, ConfigError> {
        Ok(match (&self.llm, &self.stub_rules) {
            (Some(remote), _) => Arc::new(RemoteBackend::new(remote.clone())),
            (None, Some(rules)) => Arc::new(ScriptedStub::load(rules)?),
            (None, None) => Arc::new(demo_backend()),
        })
    }

    pub fn assets(&self) -> Result<ClinicalAssets, ConfigError> {
        let desk = desk_assets();
        let m = &self.models;
        Ok(ClinicalAssets {
            emergency: m.emergency.as_ref().map(load_bundle).transpose()?.unwrap_or_else(|| desk.emergency.clone()),
            question: m.question.as_ref().map(load_bundle).transpose()?.unwrap_or_else(|| desk.question.clone()),
            readiness: m.readiness.as_ref().map(load_bundle).transpose()?.unwrap_or_else(|| desk.readiness.clone()),
            relevance: m.relevance.as_ref().map(load_bundle).transpose()?.unwrap_or_else(|| desk.relevance.clone()),
            blacklist: match &m.blacklist {
                Some(p) => BlacklistTree::load(p)?,
                None => desk.blacklist.clone(),
            },
        })
    }

    /// Loads and validates the graph, then wires services, stores and audit.
    pub fn build_with_backend(&self, llm: Arc<dyn CompletionBackend>) -> Result<Gateway, ConfigError> {
        let graph = match &self.graph {
            Some(p) => {
                let g = load_graph(p)?;
                let report = validate_graph(&g);
                if !report.is_clean() {
                    return Err(ConfigError::Invalid { path: p.display().to_string(), report: report.to_text() });
                }
                g
            }
            None => default_clinical_graph(),
        };
        let cache = match &self.question_cache {
            Some(p) => VectorStore::open(p)?,
            None => VectorStore::new(),
        };
        let services =
            Arc::new(ClinicalServices::new(llm, Arc::new(self.assets()?), Arc::new(cache), self.clinical.clone())?);
        let machine = clinical_machine(graph, &services)?;
        let sessions: Arc<dyn SessionStore> = match &self.session_dir {
            Some(dir) => Arc::new(FileSessionStore::open(dir)?),
            None => Arc::new(MemorySessionStore::new()),
        };
        let audit: Arc<dyn AuditSink> = match &self.audit_log {
            Some(p) => Arc::new(FileAudit::open(p)?),
            None => Arc::new(NullAudit),
        };
        Ok(Gateway::new(machine, sessions, self.clinical.greeting.clone()).with_audit(audit))
    }

    pub fn build(&self) -> Result<Gateway, ConfigError> {
        self.build_with_backend(self.backend()?)
    }
}
