//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use clarity_core::audit::MemoryAudit;
use clarity_core::clinical::demo_backend;
use clarity_core::gateway::{Gateway, GatewayConfig, OuterContext, ResultItem, UserRequest};

pub const HEADACHE: [&str; 4] = ["I have a headache.", "The back of my head.", "No.", "5 out of 10."];
pub const CRITICAL: [&str; 3] = ["High blood pressure.", "Yes.", "Yes."];
pub const SAFETY: [&str; 3] = ["Who are you?", "Help me with algorithms in Python.", "What can you help me with?"];

pub const ESCALATION: &str =
    "Your condition could be close to critical!\nCall 103 immediately.\nWait for the response, do not hang up!\nBriefly explain what happened.";

pub fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

pub fn demo_gateway() -> (Gateway, Arc<MemoryAudit>) {
    let audit = Arc::new(MemoryAudit::default());
    let gw = GatewayConfig::default()
        .build_with_backend(Arc::new(demo_backend()))
        .expect("default gateway builds")
        .with_audit(audit.clone());
    (gw, audit)
}

pub fn request(session: &str, text: &str) -> UserRequest {
    UserRequest {
        text: text.into(),
        outer_context: OuterContext {
            sex: true,
            age: 21,
            user_id: "user".into(),
            session_id: session.into(),
            client_id: "web".into(),
        },
    }
}

#[derive(Debug, Clone)]
pub struct Turn {
    pub state: String,
    pub text: String,
    pub results: Vec<ResultItem>,
    pub body: Vec<u8>,
}

/// Opens the session with an empty message, then sends each message through
/// the byte-level handler. Returns the greeting and one entry per message.
pub fn replay(gw: &Gateway, session: &str, messages: &[&str]) -> (String, Vec<Turn>) {
    let greeting = gw.handle(&request(session, "")).expect("greeting").response.text;
    let turns = messages
        .iter()
        .map(|m| {
            let h = gw.handle(&request(session, m)).expect("turn succeeds");
            let body = clarity_core::gateway::serialize_response(&h.response);
            Turn { state: h.state.to_string(), text: h.response.text, results: h.response.results, body }
        })
        .collect();
    (greeting, turns)
}
