//! Pluggable generation and embedding backends.
//!
//! Every language-model call in the engine goes through [`CompletionBackend`].
//! Production deployments use [`RemoteBackend`]; tests and the simulator use
//! [`ScriptedStub`], which needs no network.

mod embed;
mod remote;
mod stub;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transcript::Transcript;

pub use embed::{embed, Embedder, EmbedderKind, EmbedderSpec, EmbeddingVector, HashedNgramEmbedder, RemoteEmbedder};
pub use remote::{RemoteBackend, RemoteConfig, WireMessage, WireRequest, WireResponse};
pub use stub::{ScriptedStub, StubError, StubRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system_prompt: String,
    pub messages: Transcript,
    pub max_tokens: u32,
    pub temperature: f64,
    /// Call-site label (e.g. `"hypotheses"`). Not sent to remote backends;
    /// scripted stubs match on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

impl CompletionRequest {
    /// A deterministic (temperature 0) request with a single user message.
    pub fn new(tag: &str, system_prompt: impl Into<String>, user: impl Into<String>) -> Self {
        let mut messages = Transcript::new();
        messages.push_user(user);
        Self {
            system_prompt: system_prompt.into(),
            messages,
            max_tokens: 512,
            temperature: 0.0,
            tag: Some(tag.to_string()),
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature.max(0.0);
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdapterError {
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("backend answered HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend reply: {0}")]
    Protocol(String),
    #[error("scripted failure: {0}")]
    Scripted(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: usize, last: Box<AdapterError> },
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<String, AdapterError>;
}

impl<F> CompletionBackend for F
where
    F: Fn(&CompletionRequest) -> Result<String, AdapterError> + Send + Sync,
{
    fn complete(&self, req: &CompletionRequest) -> Result<String, AdapterError> {
        self(req)
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Arc<B> {
    fn complete(&self, req: &CompletionRequest) -> Result<String, AdapterError> {
        (**self).complete(req)
    }
}

/// Counts calls passing through to the wrapped backend.
#[derive(Debug, Default)]
pub struct CountingBackend<B> {
    inner: B,
    calls: AtomicUsize,
}

impl<B> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: CompletionBackend> CompletionBackend for CountingBackend<B> {
    fn complete(&self, req: &CompletionRequest) -> Result<String, AdapterError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(req)
    }
}

pub const CRITICALITY_TAG: &str = "criticality";

pub const DEFAULT_CRITICALITY_PROMPT: &str = "You review medical consultations. Read the conversation and decide whether \
the patient's condition may be critical and need emergency care. Answer with a single word: yes or no.";

/// Asks the backend whether the conversation describes a critical condition.
///
/// Unparseable replies and adapter failures yield `false` with a warning;
/// the flag is only one feature of the emergency scorer.
pub fn llm_critical_flag(backend: &dyn CompletionBackend, history: &Transcript, prompt: &str) -> bool {
    let req = CompletionRequest::new(CRITICALITY_TAG, prompt, history.flatten()).with_max_tokens(4);
    match backend.complete(&req) {
        Ok(reply) => match parse_yes_no(&reply) {
            Some(flag) => flag,
            None => {
                log::warn!("criticality reply without yes/no: {reply:?}");
                false
            }
        },
        Err(err) => {
            log::warn!("criticality call failed: {err}");
            false
        }
    }
}

/// First `yes`/`no` token of the reply, if any.
pub fn parse_yes_no(reply: &str) -> Option<bool> {
    crate::text::tokenize(reply).into_iter().find_map(|t| match t.as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    })
}
