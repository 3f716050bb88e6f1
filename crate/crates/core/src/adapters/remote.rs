//! HTTP chat-completion client.
//!
//! Wire protocol (POST to the configured endpoint):
//!
//! ```text
//! request:  {"system": "...", "messages": [{"role": "user"|"assistant", "content": "..."}],
//!            "max_tokens": 512, "temperature": 0.0}
//! response: {"text": "..."}
//! ```
//!
//! Earlier system turns of the transcript are sent with role `assistant`.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{AdapterError, CompletionBackend, CompletionRequest};
use crate::transcript::Role;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub retries: usize,
    /// First backoff delay; doubles on each retry.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
}

fn default_timeout_secs() -> f64 {
    30.0
}
fn default_retries() -> usize {
    2
}
fn default_backoff_ms() -> u64 {
    250
}
fn default_max_in_flight() -> usize {
    8
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: None,
            timeout_secs: default_timeout_secs(),
            retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            max_in_flight: default_max_in_flight(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub system: String,
    pub messages: Vec<WireMessage>,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl From<&CompletionRequest> for WireRequest {
    fn from(req: &CompletionRequest) -> Self {
        Self {
            system: req.system_prompt.clone(),
            messages: req
                .messages
                .iter()
                .map(|m| WireMessage {
                    role: match m.role {
                        Role::User => "user".to_string(),
                        Role::System => "assistant".to_string(),
                    },
                    content: m.content.clone(),
                })
                .collect(),
            max_tokens: req.max_tokens,
            temperature: req.temperature,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub text: String,
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard { slots: self }
    }
}

struct SlotGuard<'a> {
    slots: &'a Slots,
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.slots.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.slots.cv.notify_one();
    }
}

#[derive(Debug)]
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    slots: Slots,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(config.timeout_secs.max(0.001)))
            .build();
        let slots = Slots { free: Mutex::new(config.max_in_flight.max(1)), cv: Condvar::new() };
        Self { config, agent, slots }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn attempt(&self, body: &WireRequest) -> Result<String, AdapterError> {
        let mut call = self.agent.post(&self.config.endpoint).set("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        let payload = serde_json::to_string(body).map_err(|e| AdapterError::Protocol(e.to_string()))?;
        match call.send_string(&payload) {
            Ok(resp) => {
                let text = resp.into_string().map_err(|e| AdapterError::Transport(e.to_string()))?;
                let parsed: WireResponse =
                    serde_json::from_str(&text).map_err(|e| AdapterError::Protocol(e.to_string()))?;
                Ok(parsed.text)
            }
            Err(ureq::Error::Status(status, resp)) => {
                Err(AdapterError::Status { status, body: resp.into_string().unwrap_or_default() })
            }
            Err(ureq::Error::Transport(t)) => {
                let msg = t.to_string();
                if msg.contains("timed out") || msg.contains("timeout") {
                    Err(AdapterError::Timeout(msg))
                } else {
                    Err(AdapterError::Transport(msg))
                }
            }
        }
    }
}

fn transient(err: &AdapterError) -> bool {
    match err {
        AdapterError::Timeout(_) | AdapterError::Transport(_) => true,
        AdapterError::Status { status, .. } => *status >= 500 || *status == 429,
        _ => false,
    }
}

impl CompletionBackend for RemoteBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<String, AdapterError> {
        let _slot = self.slots.acquire();
        let body = WireRequest::from(req);
        let attempts = 1 + self.config.retries;
        let mut last = None;
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.config.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(err) if transient(&err) => {
                    log::warn!("completion attempt {} of {attempts} failed: {err}", attempt + 1);
                    last = Some(err);
                }
                Err(err) => return Err(err),
            }
        }
        Err(AdapterError::Exhausted { attempts, last: Box::new(last.expect("at least one attempt")) })
    }
}
