//! Specialty routing and free-dialogue answers.
//!
//! Routing runs in three stages: diagnostic hypotheses (re-requesting only
//! the shortfall when the model returns too few), one specialist per
//! hypothesis, and one short explanation per diagnosis/specialist pair.
//! Stages two and three run concurrently across hypotheses; results are
//! assembled in hypothesis order.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{AdapterError, CompletionBackend, CompletionRequest};
use crate::safety::{moderate, BlacklistTree};
use crate::transcript::Transcript;

pub const HYPOTHESES_TAG: &str = "hypotheses";
pub const SPECIALIST_TAG: &str = "specialist";
pub const EXPLAIN_TAG: &str = "explain";
pub const ANSWER_TAG: &str = "answer";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiagnosisHypothesis {
    pub name: String,
}

impl DiagnosisHypothesis {
    /// Trims `name`; `None` when nothing is left.
    pub fn new(name: &str) -> Option<Self> {
        let name = name.trim();
        (!name.is_empty()).then(|| Self { name: name.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferralTriple {
    pub diagnosis: String,
    pub doctor: String,
    pub description: String,
}

impl ReferralTriple {
    pub fn new(diagnosis: &str, doctor: &str, description: &str) -> Self {
        Self { diagnosis: diagnosis.to_string(), doctor: doctor.to_string(), description: description.to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingResult {
    pub triples: Vec<ReferralTriple>,
    /// Hypothesis lines parsed across all stage-one calls, before dedup.
    pub raw_hypothesis_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoutingPrompts {
    pub hypotheses: String,
    pub specialist: String,
    pub explain: String,
    pub answer: String,
}

impl Default for RoutingPrompts {
    fn default() -> Self {
        Self {
            hypotheses: "You are a physician assistant. Read the consultation and list the most likely \
diagnoses, one per line, most likely first. Reply with diagnosis names only."
                .into(),
            specialist: "Name the single most relevant medical specialist for the given diagnosis. \
Reply with the specialty only."
                .into(),
            explain: "In one or two sentences, explain to the patient why this diagnosis fits their \
complaints and why this specialist should be consulted."
                .into(),
            answer: "You are a medical consultation assistant. Answer only questions about health, \
symptoms and medical care. For anything else, politely steer the patient back to their symptoms."
                .into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoutingConfig {
    pub result_count: usize,
    /// Extra stage-one calls allowed when too few hypotheses come back.
    pub max_retries: usize,
    pub default_specialty: String,
    /// Closed specialty list; replies outside it map to `default_specialty`.
    pub specialties: Option<Vec<String>>,
    pub description_max_chars: usize,
    pub temperature: f64,
    pub closing: String,
    pub safe_refusal: String,
    pub prompts: RoutingPrompts,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self {
            result_count: 3,
            max_retries: 2,
            default_specialty: "General practitioner".into(),
            specialties: None,
            description_max_chars: 400,
            temperature: 0.0,
            closing: "Is everything clear? Feel free to ask questions!".into(),
            safe_refusal: "I'm sorry, I didn't understand your response. Could you please provide more \
specific information or rephrase your message?"
                .into(),
            prompts: RoutingPrompts::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoutingError {
    #[error("expected {wanted} hypotheses, got {}", partial.len())]
    InsufficientHypotheses { wanted: usize, partial: Vec<DiagnosisHypothesis> },
    #[error("specialist selection for `{diagnosis}` failed: {source}")]
    Specialist { diagnosis: String, source: AdapterError },
    #[error("routing needs at least one result")]
    ZeroResults,
}

/// Splits a line-delimited list reply, dropping bullets and numbering.
pub fn parse_list(reply: &str) -> Vec<String> {
    reply
        .lines()
        .map(|line| {
            let line = line.trim().trim_start_matches(['-', '*', '•']).trim_start();
            let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
            let line = if digits > 0 && line[digits..].starts_with(['.', ')', ':']) { &line[digits + 1..] } else { line };
            line.trim().to_string()
        })
        .filter(|l| !l.is_empty())
        .collect()
}

fn request(tag: &str, prompt: &str, user: String, temperature: f64) -> CompletionRequest {
    CompletionRequest::new(tag, prompt, user).with_temperature(temperature)
}

/// Stage one. Calls the backend at most `1 + max_retries` times.
pub fn generate_hypotheses(
    llm: &dyn CompletionBackend,
    history: &Transcript,
    n: usize,
    max_retries: usize,
) -> Result<Vec<DiagnosisHypothesis>, RoutingError> {
    generate_hypotheses_with(llm, history, n, max_retries, &RoutingConfig::default()).map(|(h, _)| h)
}

fn generate_hypotheses_with(
    llm: &dyn CompletionBackend,
    history: &Transcript,
    n: usize,
    max_retries: usize,
    cfg: &RoutingConfig,
) -> Result<(Vec<DiagnosisHypothesis>, usize), RoutingError> {
    let mut found: Vec<DiagnosisHypothesis> = Vec::new();
    let mut seen = HashSet::new();
    let mut raw = 0;
    let conversation = history.flatten();
    for _ in 0..=max_retries {
        let shortfall = n - found.len();
        let mut user = format!("{conversation}\n\nList {shortfall} diagnoses.");
        if !found.is_empty() {
            let names: Vec<&str> = found.iter().map(|h| h.name.as_str()).collect();
            user.push_str(&format!(" Already proposed: {}.", names.join("; ")));
        }
        match llm.complete(&request(HYPOTHESES_TAG, &cfg.prompts.hypotheses, user, cfg.temperature)) {
            Ok(reply) => {
                for line in parse_list(&reply) {
                    raw += 1;
                    if found.len() == n {
                        continue;
                    }
                    if let Some(h) = DiagnosisHypothesis::new(&line) {
                        if seen.insert(h.name.to_lowercase()) {
                            found.push(h);
                        }
                    }
                }
            }
            Err(err) => log::warn!("hypothesis generation failed: {err}"),
        }
        if found.len() == n {
            return Ok((found, raw));
        }
    }
    Err(RoutingError::InsufficientHypotheses { wanted: n, partial: found })
}

/// Stage two. One retry on adapter failure.
pub fn select_specialist(
    llm: &dyn CompletionBackend,
    h: &DiagnosisHypothesis,
    cfg: &RoutingConfig,
) -> Result<String, RoutingError> {
    let req = request(SPECIALIST_TAG, &cfg.prompts.specialist, h.name.clone(), cfg.temperature);
    let reply = llm.complete(&req).or_else(|first| {
        log::warn!("specialist selection for `{}` failed, retrying: {first}", h.name);
        llm.complete(&req)
    });
    let reply = reply.map_err(|source| RoutingError::Specialist { diagnosis: h.name.clone(), source })?;
    let answer = parse_list(&reply).into_iter().next().unwrap_or_default();
    let answer = answer.trim_end_matches('.').trim();
    let chosen = match &cfg.specialties {
        Some(vocab) => vocab.iter().find(|s| s.to_lowercase() == answer.to_lowercase()).cloned(),
        None => (!answer.is_empty()).then(|| answer.to_string()),
    };
    Ok(chosen.unwrap_or_else(|| cfg.default_specialty.clone()))
}

/// Stage three. One retry on failure or an empty reply, then a template;
/// never empty.
pub fn explain(
    llm: &dyn CompletionBackend,
    d: &DiagnosisHypothesis,
    doctor: &str,
    history: &Transcript,
    cfg: &RoutingConfig,
) -> String {
    let user = format!("Diagnosis: {}\nSpecialist: {doctor}\n\n{}", d.name, history.flatten());
    let req = request(EXPLAIN_TAG, &cfg.prompts.explain, user, cfg.temperature);
    for attempt in 0..2 {
        match llm.complete(&req) {
            Ok(reply) if !reply.trim().is_empty() => return truncate_chars(reply.trim(), cfg.description_max_chars),
            Ok(_) => log::warn!("empty explanation for `{}` (attempt {})", d.name, attempt + 1),
            Err(err) => log::warn!("explanation for `{}` failed (attempt {}): {err}", d.name, attempt + 1),
        }
    }
    format!("Consult a {doctor} regarding {}.", d.name)
}

fn truncate_chars(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) if max > 0 => s[..i].trim_end().to_string(),
        _ => s.to_string(),
    }
}

/// The full three-stage pipeline.
pub fn route(llm: &dyn CompletionBackend, history: &Transcript, cfg: &RoutingConfig) -> Result<RoutingResult, RoutingError> {
    if cfg.result_count == 0 {
        return Err(RoutingError::ZeroResults);
    }
    let (hypotheses, raw_hypothesis_count) =
        generate_hypotheses_with(llm, history, cfg.result_count, cfg.max_retries, cfg)?;
    let triples = std::thread::scope(|scope| {
        let handles: Vec<_> = hypotheses
            .iter()
            .map(|h| {
                scope.spawn(move || {
                    let doctor = select_specialist(llm, h, cfg)?;
                    let description = explain(llm, h, &doctor, history, cfg);
                    Ok(ReferralTriple { diagnosis: h.name.clone(), doctor, description })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("routing worker panicked"))
            .collect::<Result<Vec<_>, RoutingError>>()
    })?;
    Ok(RoutingResult { triples, raw_hypothesis_count })
}

/// User-facing text for a routing result: one `Diagnosis – Doctor. Description`
/// line per triple, then the closing line.
pub fn render_referrals(triples: &[ReferralTriple], closing: &str) -> String {
    let mut out = String::new();
    for t in triples {
        out.push_str(&format!("{} – {}. {}\n", t.diagnosis, t.doctor, t.description));
    }
    out.push_str(closing);
    out
}

/// Free-dialogue answer. A reply that trips the moderator (or a failed call)
/// is regenerated once; a second failure yields `cfg.safe_refusal`.
pub fn answer_free(
    llm: &dyn CompletionBackend,
    history: &Transcript,
    system_prompt: &str,
    blacklist: &BlacklistTree,
    cfg: &RoutingConfig,
) -> String {
    let mut req = CompletionRequest::new(ANSWER_TAG, system_prompt, "").with_temperature(cfg.temperature);
    req.messages = history.clone();
    for attempt in 0..2 {
        match llm.complete(&req) {
            Ok(reply) if !reply.trim().is_empty() => {
                let verdict = moderate(&reply, blacklist);
                if !verdict.flagged {
                    return reply.trim().to_string();
                }
                log::warn!("free answer flagged by moderation (attempt {}): {:?}", attempt + 1, verdict.matched);
            }
            Ok(_) => log::warn!("empty free answer (attempt {})", attempt + 1),
            Err(err) => log::warn!("free answer failed (attempt {}): {err}", attempt + 1),
        }
    }
    cfg.safe_refusal.clone()
}
