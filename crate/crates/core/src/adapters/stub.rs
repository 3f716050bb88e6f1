use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AdapterError, CompletionBackend, CompletionRequest};

/// One scripted reply. Both matchers are optional; a rule fires when every
/// matcher that is present agrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StubRule {
    /// Exact call-site tag.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    /// Case-insensitive substring of the request's last user message.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    pub reply: String,
}

impl StubRule {
    pub fn on_tag(tag: &str, reply: impl Into<String>) -> Self {
        Self { tag: Some(tag.to_string()), contains: None, reply: reply.into() }
    }

    pub fn on_text(contains: &str, reply: impl Into<String>) -> Self {
        Self { tag: None, contains: Some(contains.to_string()), reply: reply.into() }
    }

    pub fn on(tag: &str, contains: &str, reply: impl Into<String>) -> Self {
        Self { tag: Some(tag.to_string()), contains: Some(contains.to_string()), reply: reply.into() }
    }

    fn matches(&self, req: &CompletionRequest) -> bool {
        if let Some(tag) = &self.tag {
            if req.tag.as_deref() != Some(tag.as_str()) {
                return false;
            }
        }
        if let Some(needle) = &self.contains {
            let last = req.messages.last_user().unwrap_or_default().to_lowercase();
            if !last.contains(&needle.to_lowercase()) {
                return false;
            }
        }
        true
    }
}

/// Deterministic rule-based stand-in for a generation model; first matching
/// rule wins, otherwise `default_reply`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedStub {
    #[serde(default)]
    pub rules: Vec<StubRule>,
    #[serde(default)]
    pub default_reply: String,
}

#[derive(Debug, Error)]
pub enum StubError {
    #[error("reading stub rules: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing stub rules: {0}")]
    Json(#[from] serde_json::Error),
    #[error("parsing stub rules: {0}")]
    Toml(#[from] toml::de::Error),
}

impl ScriptedStub {
    pub fn new(default_reply: impl Into<String>) -> Self {
        Self { rules: Vec::new(), default_reply: default_reply.into() }
    }

    pub fn rule(mut self, rule: StubRule) -> Self {
        self.rules.push(rule);
        self
    }

    pub fn reply_for(&self, req: &CompletionRequest) -> &str {
        self.rules
            .iter()
            .find(|r| r.matches(req))
            .map(|r| r.reply.as_str())
            .unwrap_or(&self.default_reply)
    }

    /// Loads a rules document; `.toml` files are read as TOML, anything else as JSON.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, StubError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "toml") {
            Ok(toml::from_str(&text)?)
        } else {
            Ok(serde_json::from_str(&text)?)
        }
    }
}

impl CompletionBackend for ScriptedStub {
    fn complete(&self, req: &CompletionRequest) -> Result<String, AdapterError> {
        Ok(self.reply_for(req).to_string())
    }
}
