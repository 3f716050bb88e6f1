//! Request handling behind `POST /v3/request`.
//!
//! A session is identified by `(UserId, SessionId, ClientId)`. Each request
//! runs one internal cycle of the consultation machine from the session's
//! cursor and records the user message and the system reply. Only one turn
//! per session may be in flight; overlapping requests get 409.
//!
//! Status mapping: malformed bodies and empty identifiers are 400, an
//! overlapping turn is 409, and store or machine failures are 500 with a
//! generic reply. An empty `Text` on an unknown session opens it and
//! returns the greeting; on a known session it is a 400.

mod config;
mod store;
mod wire;

pub use config::{ConfigError, GatewayConfig, ENV_PREFIX};
pub use store::{FileSessionStore, MemorySessionStore, SessionRecord, SessionStore, SessionStoreError};
pub use wire::{
    deserialize_request, deserialize_response, serialize_request, serialize_response, OuterContext, ResultItem,
    SystemResponse, UserRequest,
};

use std::collections::HashSet;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use thiserror::Error;

use crate::audit::{key_hash, AuditRecord, AuditSink, NullAudit};
use crate::fsm::{Machine, StateId, TurnInput};

pub const KEY_SEPARATOR: char = '\u{1f}';

pub const DEFAULT_INTERNAL_ERROR_TEXT: &str =
    "Sorry, something went wrong on our side. Please try again in a moment.";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("a turn is already in progress for this session")]
    Conflict,
    #[error("internal error: {0}")]
    Internal(String),
}

impl GatewayError {
    pub fn status(&self) -> u16 {
        match self {
            Self::BadRequest(_) => 400,
            Self::Conflict => 409,
            Self::Internal(_) => 500,
        }
    }
}

/// `UserId`, `SessionId` and `ClientId` joined by the unit separator.
pub fn session_key(ctx: &OuterContext) -> Result<String, GatewayError> {
    for (name, value) in [("UserId", &ctx.user_id), ("SessionId", &ctx.session_id), ("ClientId", &ctx.client_id)] {
        if value.is_empty() {
            return Err(GatewayError::BadRequest(format!("{name} must not be empty")));
        }
    }
    Ok([ctx.user_id.as_str(), ctx.session_id.as_str(), ctx.client_id.as_str()].join(&KEY_SEPARATOR.to_string()))
}

/// A handled turn: the wire reply plus where the session ended up.
#[derive(Debug, Clone, PartialEq)]
pub struct Handled {
    pub response: SystemResponse,
    pub state: StateId,
    /// States visited during the turn; just the initial state for a greeting.
    pub path: Vec<StateId>,
}

/// Status code and body of an HTTP exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exchange {
    pub status: u16,
    pub body: Vec<u8>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
}

pub struct Gateway {
    machine: Machine,
    sessions: Arc<dyn SessionStore>,
    audit: Arc<dyn AuditSink>,
    greeting: String,
    internal_error_text: String,
    in_flight: Mutex<HashSet<String>>,
}

/// Releases the session's in-flight slot on drop.
struct TurnGuard<'a> {
    set: &'a Mutex<HashSet<String>>,
    key: String,
}

impl Drop for TurnGuard<'_> {
    fn drop(&mut self) {
        self.set.lock().unwrap_or_else(|e| e.into_inner()).remove(&self.key);
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl Gateway {
    pub fn new(machine: Machine, sessions: Arc<dyn SessionStore>, greeting: impl Into<String>) -> Self {
        Self {
            machine,
            sessions,
            audit: Arc::new(NullAudit),
            greeting: greeting.into(),
            internal_error_text: DEFAULT_INTERNAL_ERROR_TEXT.into(),
            in_flight: Mutex::new(HashSet::new()),
        }
    }

    pub fn with_audit(mut self, audit: Arc<dyn AuditSink>) -> Self {
        self.audit = audit;
        self
    }

    pub fn with_internal_error_text(mut self, text: impl Into<String>) -> Self {
        self.internal_error_text = text.into();
        self
    }

    pub fn machine(&self) -> &Machine {
        &self.machine
    }

    pub fn sessions(&self) -> &Arc<dyn SessionStore> {
        &self.sessions
    }

    /// Full HTTP semantics over raw bytes.
    pub fn handle_body(&self, body: &[u8]) -> Exchange {
        let result = deserialize_request(body)
            .map_err(|e| GatewayError::BadRequest(e.to_string()))
            .and_then(|req| self.handle(&req));
        match result {
            Ok(handled) => Exchange { status: 200, body: serialize_response(&handled.response) },
            Err(GatewayError::Internal(msg)) => {
                log::error!("turn failed: {msg}");
                Exchange { status: 500, body: serialize_response(&SystemResponse::text(self.internal_error_text.clone())) }
            }
            Err(err) => Exchange {
                status: err.status(),
                body: serde_json::to_vec(&ErrorBody { error: &err.to_string() }).expect("error body serializes"),
            },
        }
    }

    pub fn handle(&self, req: &UserRequest) -> Result<Handled, GatewayError> {
        let key = session_key(&req.outer_context)?;
        let _guard = self.begin(&key)?;
        let existing = self.sessions.load(&key).map_err(|e| GatewayError::Internal(e.to_string()))?;
        let text = req.text.trim();
        let mut record = match existing {
            Some(record) if text.is_empty() => {
                return Err(GatewayError::BadRequest(format!("empty Text for open session at `{}`", record.cursor)))
            }
            Some(record) => record,
            None if text.is_empty() => return self.open(key, req),
            None => SessionRecord {
                key: key.clone(),
                cursor: self.machine.graph().initial().clone(),
                transcript: Default::default(),
                context: Default::default(),
                updated_at: now(),
            },
        };
        record.context.age = Some(req.outer_context.age);
        record.context.sex = Some(req.outer_context.sex);
        let mut input =
            TurnInput { message: req.text.clone(), history: record.transcript.clone(), context: record.context.clone() };
        let outcome = self
            .machine
            .run_internal_cycle(&record.cursor, &mut input)
            .map_err(|e| GatewayError::Internal(e.to_string()))?;
        record.transcript.push_user(req.text.clone());
        record.transcript.push_system(outcome.output.text.clone());
        record.context = input.context;
        record.cursor = outcome.state.clone();
        record.updated_at = now();
        self.sessions.save(&record).map_err(|e| GatewayError::Internal(e.to_string()))?;

        let results: Vec<ResultItem> =
            outcome.output.payload.clone().unwrap_or_default().into_iter().map(ResultItem::from).collect();
        let path: Vec<StateId> = outcome.trace.states().into_iter().cloned().collect();
        self.audit.record(&AuditRecord {
            ts: record.updated_at,
            key_hash: key_hash(&key),
            turn: record.transcript.user_turns(),
            state_path: path.iter().map(|q| q.to_string()).collect(),
            final_state: outcome.state.to_string(),
            verdicts: outcome.verdicts.clone(),
            result_count: results.len(),
        });
        Ok(Handled { response: SystemResponse { text: outcome.output.text, results }, state: outcome.state, path })
    }

    /// Greeting for a session-open ping; only the greeting is recorded.
    fn open(&self, key: String, req: &UserRequest) -> Result<Handled, GatewayError> {
        let initial = self.machine.graph().initial().clone();
        let mut record = SessionRecord {
            key,
            cursor: initial.clone(),
            transcript: Default::default(),
            context: Default::default(),
            updated_at: now(),
        };
        record.context.age = Some(req.outer_context.age);
        record.context.sex = Some(req.outer_context.sex);
        record.transcript.push_system(self.greeting.clone());
        self.sessions.save(&record).map_err(|e| GatewayError::Internal(e.to_string()))?;
        Ok(Handled { response: SystemResponse::text(self.greeting.clone()), state: initial.clone(), path: vec![initial] })
    }

    fn begin(&self, key: &str) -> Result<TurnGuard<'_>, GatewayError> {
        let mut set = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        if !set.insert(key.to_string()) {
            return Err(GatewayError::Conflict);
        }
        Ok(TurnGuard { set: &self.in_flight, key: key.to_string() })
    }

    /// Holds the session's turn slot until the guard is dropped; lets
    /// callers exercise the overlap path deterministically.
    pub fn hold_turn(&self, ctx: &OuterContext) -> Result<impl Drop + '_, GatewayError> {
        self.begin(&session_key(ctx)?)
    }
}
