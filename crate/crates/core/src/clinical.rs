//! The consultation graph and the services behind its predicates and actions.
//!
//! Predicates: `unsafe_input`, `emergency`, `is_question`, `ready` (all
//! memoized per turn) and `routed`, a session fact set once routing has
//! answered. Actions: `greet`, `collect`, `route`, `answer`, `escalate`,
//! `refuse`.
//!
//! [`desk_assets`] trains the desk-scale classifiers from the seeded
//! fixture corpus; deployments load bundles instead.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{llm_critical_flag, CompletionBackend, Embedder, EmbedderSpec, ScriptedStub, DEFAULT_CRITICALITY_PROMPT};
use crate::collector::{Collector, CollectorConfig, VectorStore};
use crate::eval::{generate_fixtures, FixtureSpec, CRITICAL_WORDS};
use crate::fsm::{
    parse_graph, ActionError, ActionRegistry, BindError, ConditionRegistry, DocumentError, FsmGraph, Machine, Memoized,
    Reply, TurnInput,
};
use crate::progress::{
    detect_question, estimate_readiness, fit_linear, LinearExample, LinearTextModel, LinearTrainConfig, ProgressError,
    ProgressKind,
};
use crate::routing::{answer_free, render_referrals, route, RoutingConfig};
use crate::safety::{
    emergency_score, moderate, train_emergency, BlacklistError, BlacklistTree, EmergencyExample, EmergencyModel,
    EmergencyTrainConfig, TrainError,
};

pub const CLINICAL_GRAPH_TOML: &str = include_str!("../assets/clinical_graph.toml");
pub const DEFAULT_BLACKLIST_TOML: &str = include_str!("../assets/blacklist.toml");
pub const DEMO_STUB_TOML: &str = include_str!("../assets/demo_stub.toml");

/// Seed of the corpus behind [`desk_assets`].
pub const DESK_SEED: u64 = 20_240_601;

pub const ROUTED_FACT: &str = "routed";

pub mod states {
    pub const INITIALIZATION: &str = "Initialization";
    pub const INFORMATION_COLLECTION: &str = "InformationCollection";
    pub const DIAGNOSTIC_ROUTING: &str = "DiagnosticRouting";
    pub const MODERATION: &str = "Moderation";
    pub const EMERGENCY: &str = "Emergency";
    pub const FREE_DIALOGUE: &str = "FreeDialogue";
}

pub fn default_clinical_graph() -> FsmGraph {
    parse_graph(CLINICAL_GRAPH_TOML).expect("bundled graph is valid")
}

pub fn default_blacklist() -> BlacklistTree {
    BlacklistTree::parse(DEFAULT_BLACKLIST_TOML).expect("bundled blacklist is valid")
}

/// Scripted backend covering the bundled demo consultations.
pub fn demo_backend() -> ScriptedStub {
    toml::from_str(DEMO_STUB_TOML).expect("bundled stub rules are valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClinicalConfig {
    pub greeting: String,
    pub escalation: String,
    pub criticality_prompt: String,
    pub collector: CollectorConfig,
    pub routing: RoutingConfig,
    pub embedder: EmbedderSpec,
}

impl Default for ClinicalConfig {
    fn default() -> Self {
        Self {
            greeting: "What's bothering you?".into(),
            escalation: "Your condition could be close to critical!\nCall 103 immediately.\nWait for the response, do not \
hang up!\nBriefly explain what happened."
                .into(),
            criticality_prompt: DEFAULT_CRITICALITY_PROMPT.into(),
            collector: CollectorConfig::default(),
            routing: RoutingConfig::default(),
            embedder: EmbedderSpec::default(),
        }
    }
}

/// Trained decision models plus the moderation blacklist.
#[derive(Debug, Clone, PartialEq)]
pub struct ClinicalAssets {
    pub emergency: EmergencyModel,
    pub question: LinearTextModel,
    pub readiness: LinearTextModel,
    pub relevance: LinearTextModel,
    pub blacklist: BlacklistTree,
}

#[derive(Debug, Error)]
pub enum AssetError {
    #[error("emergency model: {0}")]
    Emergency(#[from] TrainError),
    #[error("linear model: {0}")]
    Linear(#[from] ProgressError),
    #[error("blacklist: {0}")]
    Blacklist(#[from] BlacklistError),
    #[error("graph: {0}")]
    Graph(#[from] DocumentError),
}

pub fn emergency_examples(chats: &[crate::eval::AnnotatedChat]) -> Vec<EmergencyExample> {
    chats
        .iter()
        .filter_map(|c| {
            Some(EmergencyExample { transcript: c.transcript.clone(), llm_flag: c.llm_flag.unwrap_or(false), critical: c.emergency? })
        })
        .collect()
}

pub fn question_examples(chats: &[crate::eval::AnnotatedChat]) -> Vec<LinearExample> {
    chats
        .iter()
        .filter_map(|c| Some(LinearExample::message(c.transcript.last_user()?, c.question?)))
        .collect()
}

pub fn readiness_examples(chats: &[crate::eval::AnnotatedChat]) -> Vec<LinearExample> {
    chats
        .iter()
        .filter_map(|c| {
            let ready = c.ready?;
            let remaining = c.anamnesis_turns.map(|n| f64::from(n).max(c.transcript.user_turns() as f64) - c.transcript.user_turns() as f64);
            Some(LinearExample::history(&c.transcript, ready, remaining))
        })
        .collect()
}

/// Trains every classifier from the fixture corpus for `seed`. The relevance
/// model is left at zero weights, so candidates keep generation order.
pub fn train_desk_assets(seed: u64) -> Result<ClinicalAssets, AssetError> {
    let chats = generate_fixtures(seed, &FixtureSpec::default());
    let emergency_cfg = EmergencyTrainConfig {
        critical_words: CRITICAL_WORDS.iter().map(|w| w.to_string()).collect(),
        ..Default::default()
    };
    let (emergency, _) = train_emergency(&emergency_examples(&chats), &emergency_cfg)?;
    let linear = LinearTrainConfig::default();
    let question = fit_linear(&question_examples(&chats), ProgressKind::Question, &linear)?.model;
    let readiness = fit_linear(&readiness_examples(&chats), ProgressKind::Readiness, &linear)?.model;
    let relevance = LinearTextModel::zero(ProgressKind::Relevance, linear.embedder.clone());
    Ok(ClinicalAssets { emergency, question, readiness, relevance, blacklist: default_blacklist() })
}

/// Desk-scale assets for [`DESK_SEED`], trained once per process.
pub fn desk_assets() -> Arc<ClinicalAssets> {
    static ASSETS: OnceLock<Arc<ClinicalAssets>> = OnceLock::new();
    ASSETS
        .get_or_init(|| Arc::new(train_desk_assets(DESK_SEED).expect("fixture corpus trains")))
        .clone()
}

/// Everything the clinical predicates and actions call into.
pub struct ClinicalServices {
    pub llm: Arc<dyn CompletionBackend>,
    pub assets: Arc<ClinicalAssets>,
    pub embedder: Arc<dyn Embedder>,
    pub store: Arc<VectorStore>,
    pub config: ClinicalConfig,
}

impl ClinicalServices {
    pub fn new(
        llm: Arc<dyn CompletionBackend>,
        assets: Arc<ClinicalAssets>,
        store: Arc<VectorStore>,
        config: ClinicalConfig,
    ) -> Result<Self, crate::adapters::AdapterError> {
        let embedder: Arc<dyn Embedder> = Arc::from(config.embedder.build()?);
        Ok(Self { llm, assets, embedder, store, config })
    }

    /// Desk assets, an empty in-memory cache and default configuration.
    pub fn desk(llm: Arc<dyn CompletionBackend>) -> Self {
        Self::new(llm, desk_assets(), Arc::new(VectorStore::new()), ClinicalConfig::default())
            .expect("default embedder builds")
    }

    pub fn is_unsafe(&self, w: &TurnInput) -> bool {
        moderate(&w.message, &self.assets.blacklist).flagged
    }

    pub fn is_emergency(&self, w: &TurnInput) -> bool {
        let history = w.transcript();
        let flag = llm_critical_flag(self.llm.as_ref(), &history, &self.config.criticality_prompt);
        match emergency_score(&history, &self.assets.emergency, flag) {
            Ok(v) => v.critical,
            Err(err) => {
                log::error!("emergency scoring failed: {err}");
                false
            }
        }
    }

    pub fn is_question(&self, w: &TurnInput) -> bool {
        match detect_question(&w.message, &self.assets.question) {
            Ok(v) => v.is_question,
            Err(err) => {
                log::error!("question detection failed: {err}");
                false
            }
        }
    }

    pub fn is_ready(&self, w: &TurnInput) -> bool {
        match estimate_readiness(&w.transcript(), &self.assets.readiness) {
            Ok(v) => v.ready,
            Err(err) => {
                log::error!("readiness estimation failed: {err}");
                false
            }
        }
    }

    fn collect(&self, w: &mut TurnInput) -> Result<Reply, ActionError> {
        let collector = Collector {
            store: &self.store,
            cfg: &self.config.collector,
            llm: self.llm.as_ref(),
            relevance: &self.assets.relevance,
            embedder: self.embedder.as_ref(),
        };
        let step = collector.step(&w.transcript()).map_err(|e| ActionError::new(e.to_string()))?;
        Ok(Reply::text(step.question))
    }

    fn route(&self, w: &mut TurnInput) -> Result<Reply, ActionError> {
        let cfg = &self.config.routing;
        let result = route(self.llm.as_ref(), &w.transcript(), cfg).map_err(|e| ActionError::new(e.to_string()))?;
        w.context.set_flag(ROUTED_FACT, true);
        Ok(Reply { text: render_referrals(&result.triples, &cfg.closing), payload: Some(result.triples) })
    }

    fn answer(&self, w: &mut TurnInput) -> Result<Reply, ActionError> {
        let cfg = &self.config.routing;
        Ok(Reply::text(answer_free(self.llm.as_ref(), &w.transcript(), &cfg.prompts.answer, &self.assets.blacklist, cfg)))
    }
}

pub fn clinical_conditions(services: &Arc<ClinicalServices>) -> ConditionRegistry {
    let mut r = ConditionRegistry::new();
    let s = services.clone();
    r.register("unsafe_input", Memoized(move |w: &TurnInput| s.is_unsafe(w)));
    let s = services.clone();
    r.register("emergency", Memoized(move |w: &TurnInput| s.is_emergency(w)));
    let s = services.clone();
    r.register("is_question", Memoized(move |w: &TurnInput| s.is_question(w)));
    let s = services.clone();
    r.register("ready", Memoized(move |w: &TurnInput| s.is_ready(w)));
    r.register(ROUTED_FACT, |w: &TurnInput| w.context.flag(ROUTED_FACT));
    r
}

pub fn clinical_actions(services: &Arc<ClinicalServices>) -> ActionRegistry {
    let mut r = ActionRegistry::new();
    let greeting = services.config.greeting.clone();
    r.register("greet", move |_: &mut TurnInput| Ok(Reply::text(greeting.clone())));
    let s = services.clone();
    r.register("collect", move |w: &mut TurnInput| s.collect(w));
    let s = services.clone();
    r.register("route", move |w: &mut TurnInput| s.route(w));
    let s = services.clone();
    r.register("answer", move |w: &mut TurnInput| s.answer(w));
    let escalation = services.config.escalation.clone();
    r.register("escalate", move |_: &mut TurnInput| Ok(Reply::text(escalation.clone())));
    let refusal = services.config.routing.safe_refusal.clone();
    r.register("refuse", move |_: &mut TurnInput| Ok(Reply::text(refusal.clone())));
    r
}

pub fn clinical_machine(graph: FsmGraph, services: &Arc<ClinicalServices>) -> Result<Machine, BindError> {
    Machine::bind(graph, clinical_conditions(services), clinical_actions(services))
}
