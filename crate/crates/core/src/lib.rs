//! Hybrid clinical triage dialogue engine.
//!
//! A finite state machine orchestrates decision services (moderation,
//! emergency detection, readiness, question detection), an
//! information-collection pipeline with a similarity cache and a
//! diagnosis-to-specialist router. Every language-model call goes through
//! [`adapters::CompletionBackend`], so the whole engine runs against a
//! deterministic scripted backend.

pub mod adapters;
pub mod audit;
pub mod bundle;
pub mod clinical;
pub mod collector;
pub mod eval;
pub mod fsm;
pub mod gateway;
pub mod progress;
pub mod routing;
pub mod safety;
pub mod text;
pub mod transcript;
