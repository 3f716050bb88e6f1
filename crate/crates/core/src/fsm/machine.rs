//! Binding of a graph to its predicate and action registries, and the
//! transition/output/internal-cycle semantics.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::graph::{FsmGraph, StateId, Transition};
use crate::routing::ReferralTriple;
use crate::transcript::{SessionContext, Transcript};

/// The input of one external-cycle turn.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TurnInput {
    /// Current user message.
    pub message: String,
    /// Conversation before the current message.
    pub history: Transcript,
    pub context: SessionContext,
}

impl TurnInput {
    pub fn new(message: impl Into<String>) -> Self {
        Self { message: message.into(), ..Default::default() }
    }

    pub fn with_history(message: impl Into<String>, history: Transcript) -> Self {
        Self { message: message.into(), history, context: SessionContext::default() }
    }

    /// History with the current message appended.
    pub fn transcript(&self) -> Transcript {
        self.history.with_user(&self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemOutput {
    pub text: String,
    pub emitted_state: StateId,
    pub payload: Option<Vec<ReferralTriple>>,
}

/// What an action produces; the executor stamps the emitting state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Reply {
    pub text: String,
    pub payload: Option<Vec<ReferralTriple>>,
}

impl Reply {
    pub fn text(text: impl Into<String>) -> Self {
        Self { text: text.into(), payload: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("action failed: {message}")]
pub struct ActionError {
    pub message: String,
    /// User-facing text to emit from the default state instead of running its action.
    pub handoff_text: Option<String>,
}

impl ActionError {
    pub fn new(message: impl Into<String>) -> Self {
        Self { message: message.into(), handoff_text: None }
    }

    pub fn with_handoff(message: impl Into<String>, handoff: impl Into<String>) -> Self {
        Self { message: message.into(), handoff_text: Some(handoff.into()) }
    }
}

pub trait Predicate: Send + Sync {
    fn evaluate(&self, input: &TurnInput) -> bool;

    /// Service-backed predicates return true so their verdict is computed at
    /// most once per turn.
    fn memoize(&self) -> bool {
        false
    }
}

impl<F> Predicate for F
where
    F: Fn(&TurnInput) -> bool + Send + Sync,
{
    fn evaluate(&self, input: &TurnInput) -> bool {
        self(input)
    }
}

/// Wraps a predicate so its verdict is cached per turn.
pub struct Memoized<P>(pub P);

impl<P: Predicate> Predicate for Memoized<P> {
    fn evaluate(&self, input: &TurnInput) -> bool {
        self.0.evaluate(input)
    }

    fn memoize(&self) -> bool {
        true
    }
}

/// A state's output function. Actions may record facts in `input.context`.
pub trait Action: Send + Sync {
    fn perform(&self, input: &mut TurnInput) -> Result<Reply, ActionError>;
}

impl<F> Action for F
where
    F: Fn(&mut TurnInput) -> Result<Reply, ActionError> + Send + Sync,
{
    fn perform(&self, input: &mut TurnInput) -> Result<Reply, ActionError> {
        self(input)
    }
}

#[derive(Clone, Default)]
pub struct ConditionRegistry {
    map: HashMap<String, Arc<dyn Predicate>>,
}

impl ConditionRegistry {
    /// Registry holding the built-in `always` and `never` predicates.
    pub fn new() -> Self {
        let mut r = Self::default();
        r.register("always", |_: &TurnInput| true);
        r.register("never", |_: &TurnInput| false);
        r
    }

    pub fn register(&mut self, name: &str, predicate: impl Predicate + 'static) -> &mut Self {
        self.map.insert(name.to_string(), Arc::new(predicate));
        self
    }

    pub fn get(&self, name: &str) -> Option<&Arc<dyn Predicate>> {
        self.map.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }
}

impl fmt::Debug for ConditionRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names: Vec<_> = self.names().collect();
        names.sort_unstable();
        f.debug_struct("ConditionRegistry").field("names", &names).finish()
    }
}

#[derive(Clone, Default)]
pub struct ActionRegistry {
    map: HashMap<String, Arc<dyn Action>>,
}

impl ActionRegistry {
    /// Registry holding the built-in `echo` and `silent` actions.
    pub fn new() -> Self {
        let mut r = Self::default();
        r.register("echo", |w: &mut TurnInput| Ok(Reply::text(w.message.clone())));
        r.register("silent", |_: &mut TurnInput| Ok(Reply::default()));
        r
    }

    pub fn register(&mut self, name: &str, action: impl Action + 'static) -> &mut Self {
        self.map.insert(name.to_string(), Arc::new(action));
        self
    }

    pub fn get(&self, name: &str) -> Option<&Arc<dyn Action>> {
        self.map.get(name)
    }
}

impl fmt::Debug for ActionRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut names: Vec<_> = self.map.keys().collect();
        names.sort_unstable();
        f.debug_struct("ActionRegistry").field("names", &names).finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BindError {
    #[error("transition {transition} references unregistered predicate `{predicate}`")]
    UnknownPredicate { transition: String, predicate: String },
    #[error("state `{state}` references unregistered action `{action}`")]
    UnknownAction { state: StateId, action: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CycleError {
    #[error("state `{0}` is not part of the graph")]
    UnknownState(StateId),
    #[error("default state `{state}` failed after `{original}` failed: {error}")]
    Action { state: StateId, original: StateId, error: ActionError },
}

/// Per-turn cache of service verdicts keyed by predicate name.
#[derive(Debug, Default)]
pub struct TurnMemo {
    verdicts: RefCell<BTreeMap<String, bool>>,
}

impl TurnMemo {
    pub fn new() -> Self {
        Self::default()
    }

    fn evaluate(&self, name: &str, predicate: &dyn Predicate, input: &TurnInput) -> bool {
        if !predicate.memoize() {
            return predicate.evaluate(input);
        }
        if let Some(v) = self.verdicts.borrow().get(name) {
            return *v;
        }
        let v = predicate.evaluate(input);
        self.verdicts.borrow_mut().insert(name.to_string(), v);
        v
    }

    pub fn verdicts(&self) -> BTreeMap<String, bool> {
        self.verdicts.borrow().clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Final,
    AttemptsExhausted,
    CorrectAnswer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: StateId,
    pub output: SystemOutput,
    /// Set when the target state's action failed and the default state answered.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovered_from: Option<StateId>,
    /// Trace of the child graph when `state` is composite.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subtrace: Option<Box<StepTrace>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub visited: Vec<Step>,
    pub terminated_by: Termination,
}

impl StepTrace {
    pub fn len(&self) -> usize {
        self.visited.len()
    }

    pub fn is_empty(&self) -> bool {
        self.visited.is_empty()
    }

    pub fn states(&self) -> Vec<&StateId> {
        self.visited.iter().map(|s| &s.state).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleOutcome {
    pub output: SystemOutput,
    pub state: StateId,
    pub trace: StepTrace,
    /// Memoized service verdicts computed during the turn.
    pub verdicts: BTreeMap<String, bool>,
}

/// A graph whose predicate and action names have all been resolved.
#[derive(Clone)]
pub struct Machine {
    graph: Arc<FsmGraph>,
    conditions: ConditionRegistry,
    actions: ActionRegistry,
    /// Outgoing transition indices per state, sorted by priority.
    ranked: HashMap<StateId, Vec<usize>>,
    children: HashMap<StateId, Machine>,
}

impl fmt::Debug for Machine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Machine").field("graph", &self.graph).finish_non_exhaustive()
    }
}

impl Machine {
    /// Resolves every predicate and action name, including those of subgraphs.
    pub fn bind(graph: FsmGraph, conditions: ConditionRegistry, actions: ActionRegistry) -> Result<Self, BindError> {
        for t in graph.transitions() {
            for c in &t.conditions {
                if conditions.get(c.predicate()).is_none() {
                    return Err(BindError::UnknownPredicate {
                        transition: t.to_string(),
                        predicate: c.predicate().to_string(),
                    });
                }
            }
        }
        for (state, action) in graph.actions() {
            if actions.get(action).is_none() {
                return Err(BindError::UnknownAction { state: state.clone(), action: action.clone() });
            }
        }
        let mut ranked: HashMap<StateId, Vec<usize>> = HashMap::new();
        for (i, t) in graph.transitions().iter().enumerate() {
            ranked.entry(t.source.clone()).or_default().push(i);
        }
        for list in ranked.values_mut() {
            list.sort_by_key(|&i| graph.transitions()[i].priority);
        }
        let mut children = HashMap::new();
        for (state, child) in graph.subgraphs() {
            let bound = Machine::bind(child.clone(), conditions.clone(), actions.clone())?;
            children.insert(state.clone(), bound);
        }
        Ok(Self { graph: Arc::new(graph), conditions, actions, ranked, children })
    }

    pub fn graph(&self) -> &FsmGraph {
        &self.graph
    }

    /// Conjunction of the transition's conditions over `w`.
    pub fn is_triggered(&self, t: &Transition, w: &TurnInput) -> bool {
        self.is_triggered_in(t, w, &TurnMemo::new())
    }

    fn is_triggered_in(&self, t: &Transition, w: &TurnInput, memo: &TurnMemo) -> bool {
        t.conditions.iter().all(|c| {
            let p = self.conditions.get(c.predicate()).expect("predicates resolved at bind time");
            memo.evaluate(c.predicate(), p.as_ref(), w) != c.negated()
        })
    }

    /// Target of the lowest-ranked triggered transition out of `q`, or the
    /// default state when none triggers.
    pub fn delta(&self, q: &StateId, w: &TurnInput) -> StateId {
        self.delta_in(q, w, &TurnMemo::new())
    }

    pub fn delta_in(&self, q: &StateId, w: &TurnInput, memo: &TurnMemo) -> StateId {
        let transitions = self.graph.transitions();
        self.ranked
            .get(q)
            .into_iter()
            .flatten()
            .map(|&i| &transitions[i])
            .find(|t| self.is_triggered_in(t, w, memo))
            .map(|t| t.target.clone())
            .unwrap_or_else(|| self.graph.default_state().clone())
    }

    /// Runs the action bound to `q`.
    pub fn lambda_output(&self, q: &StateId, w: &mut TurnInput) -> Result<SystemOutput, ActionError> {
        let name = self.graph.action_of(q).ok_or_else(|| ActionError::new(format!("no action for `{q}`")))?;
        let action = self.actions.get(name).expect("actions resolved at bind time");
        let reply = action.perform(w)?;
        Ok(SystemOutput { text: reply.text, emitted_state: q.clone(), payload: reply.payload })
    }

    /// One turn of the internal cycle starting from `q`: repeatedly apply
    /// `delta` then the output function until a final state, the
    /// correct-answer state, or `n_attempts` steps. At least one step is
    /// always taken.
    pub fn run_internal_cycle(&self, q: &StateId, w: &mut TurnInput) -> Result<CycleOutcome, CycleError> {
        if !self.graph.contains(q) {
            return Err(CycleError::UnknownState(q.clone()));
        }
        let memo = TurnMemo::new();
        let trace = self.run(q.clone(), w, &memo, false)?;
        let last = trace.visited.last().expect("at least one step");
        Ok(CycleOutcome {
            output: last.output.clone(),
            state: last.state.clone(),
            verdicts: memo.verdicts(),
            trace,
        })
    }

    fn run(&self, start: StateId, w: &mut TurnInput, memo: &TurnMemo, entering: bool) -> Result<StepTrace, CycleError> {
        let g = &self.graph;
        let mut visited = Vec::new();
        let mut q = start;
        let mut first = true;
        loop {
            let next = if first && entering { q.clone() } else { self.delta_in(&q, w, memo) };
            first = false;
            visited.push(self.visit(next.clone(), w, memo)?);
            q = visited.last().map(|s| s.state.clone()).unwrap_or(next);
            let terminated_by = if q == *g.correct_answer() {
                Some(Termination::CorrectAnswer)
            } else if g.is_final(&q) {
                Some(Termination::Final)
            } else if visited.len() >= g.n_attempts() {
                Some(Termination::AttemptsExhausted)
            } else {
                None
            };
            if let Some(terminated_by) = terminated_by {
                return Ok(StepTrace { visited, terminated_by });
            }
        }
    }

    fn visit(&self, q: StateId, w: &mut TurnInput, memo: &TurnMemo) -> Result<Step, CycleError> {
        match self.produce(&q, w, memo) {
            Ok((output, subtrace)) => Ok(Step { state: q, output, recovered_from: None, subtrace }),
            Err(err) => {
                let fallback = self.graph.default_state().clone();
                if fallback == q {
                    return Err(CycleError::Action { state: q.clone(), original: q, error: err });
                }
                log::warn!("action for `{q}` failed ({}); answering from `{fallback}`", err.message);
                let output = match err.handoff_text {
                    Some(text) => SystemOutput { text, emitted_state: fallback.clone(), payload: None },
                    None => self
                        .lambda_output(&fallback, w)
                        .map_err(|error| CycleError::Action { state: fallback.clone(), original: q.clone(), error })?,
                };
                Ok(Step { state: fallback, output, recovered_from: Some(q), subtrace: None })
            }
        }
    }

    fn produce(
        &self,
        q: &StateId,
        w: &mut TurnInput,
        memo: &TurnMemo,
    ) -> Result<(SystemOutput, Option<Box<StepTrace>>), ActionError> {
        match self.children.get(q) {
            None => Ok((self.lambda_output(q, w)?, None)),
            Some(child) => {
                let start = child.graph.initial().clone();
                let trace = child.run(start, w, memo, true).map_err(|e| ActionError::new(e.to_string()))?;
                let mut output = trace.visited.last().expect("at least one step").output.clone();
                output.emitted_state = q.clone();
                Ok((output, Some(Box::new(trace))))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;

    fn registries() -> (ConditionRegistry, ActionRegistry) {
        let mut c = ConditionRegistry::new();
        c.register("is_question", |w: &TurnInput| w.message.trim_end().ends_with('?'));
        let mut a = ActionRegistry::new();
        a.register("greet", |_: &mut TurnInput| Ok(Reply::text("What's bothering you?")));
        a.register("fail", |_: &mut TurnInput| Err(ActionError::new("boom")));
        a.register("handoff", |_: &mut TurnInput| Err(ActionError::with_handoff("boom", "Please see a doctor.")));
        (c, a)
    }

    fn bind(g: FsmGraph) -> Machine {
        let (c, a) = registries();
        Machine::bind(g, c, a).unwrap()
    }

    fn three_states() -> crate::fsm::GraphBuilder {
        FsmGraph::builder()
            .state("A", "echo")
            .state("B", "echo")
            .state("C", "echo")
            .initial("A")
            .default_state("C")
            .correct_answer("C")
    }

    #[test]
    fn conjunction_of_truths_triggers() {
        let m = bind(three_states().transition("A", &["always", "always"], "B", 0).build().unwrap());
        assert!(m.is_triggered(&m.graph().transitions()[0].clone(), &TurnInput::new("x")));
    }

    #[test]
    fn one_false_conjunct_blocks() {
        let m = bind(three_states().transition("A", &["always", "never"], "B", 0).build().unwrap());
        assert!(!m.is_triggered(&m.graph().transitions()[0].clone(), &TurnInput::new("x")));
    }

    #[test]
    fn question_condition_uses_classifier() {
        let m = bind(three_states().transition("A", &["is_question"], "B", 0).build().unwrap());
        let t = m.graph().transitions()[0].clone();
        assert!(m.is_triggered(&t, &TurnInput::new("does it hurt?")));
        let negated = bind(three_states().transition("A", &["!is_question"], "B", 0).build().unwrap());
        assert!(!negated.is_triggered(&negated.graph().transitions()[0].clone(), &TurnInput::new("does it hurt?")));
    }

    #[test]
    fn delta_follows_single_transition_and_falls_back() {
        let m = bind(three_states().transition("A", &["always"], "B", 0).build().unwrap());
        assert_eq!(m.delta(&"A".into(), &TurnInput::new("x")), "B");
        assert_eq!(m.delta(&"B".into(), &TurnInput::new("x")), "C");
    }

    #[test]
    fn delta_prefers_lowest_priority() {
        let m = bind(
            three_states()
                .transition("A", &["always"], "C", 1)
                .transition("A", &["always"], "B", 0)
                .build()
                .unwrap(),
        );
        assert_eq!(m.delta(&"A".into(), &TurnInput::new("x")), "B");
    }

    #[test]
    fn bind_rejects_unknown_names() {
        let (c, a) = registries();
        let g = three_states().transition("A", &["!mystery"], "B", 0).build().unwrap();
        assert!(matches!(Machine::bind(g, c.clone(), a.clone()), Err(BindError::UnknownPredicate { .. })));
        let g = three_states().state("D", "nope").build().unwrap();
        assert!(matches!(Machine::bind(g, c, a), Err(BindError::UnknownAction { .. })));
    }

    #[test]
    fn echo_action_returns_message() {
        let m = bind(three_states().build().unwrap());
        let out = m.lambda_output(&"A".into(), &mut TurnInput::new("x")).unwrap();
        assert_eq!(out.text, "x");
        assert_eq!(out.emitted_state, "A");
    }

    #[test]
    fn immediate_correct_answer_stops_after_one_step() {
        let m = bind(three_states().transition("A", &["always"], "C", 0).build().unwrap());
        let out = m.run_internal_cycle(&"A".into(), &mut TurnInput::new("x")).unwrap();
        assert_eq!(out.trace.len(), 1);
        assert_eq!(out.trace.terminated_by, Termination::CorrectAnswer);
        assert_eq!(out.state, "C");
    }

    #[test]
    fn self_loop_exhausts_attempts() {
        let m = bind(three_states().transition("A", &["always"], "A", 0).n_attempts(3).build().unwrap());
        let out = m.run_internal_cycle(&"A".into(), &mut TurnInput::new("x")).unwrap();
        assert_eq!(out.trace.len(), 3);
        assert_eq!(out.trace.terminated_by, Termination::AttemptsExhausted);
    }

    #[test]
    fn final_state_stops_the_cycle() {
        let m = bind(three_states().transition("A", &["always"], "B", 0).final_state("B").build().unwrap());
        let out = m.run_internal_cycle(&"A".into(), &mut TurnInput::new("x")).unwrap();
        assert_eq!(out.trace.states(), vec![&StateId::from("B")]);
        assert_eq!(out.trace.terminated_by, Termination::Final);
    }

    #[test]
    fn failing_action_answers_from_default_state() {
        let g = FsmGraph::builder()
            .state("A", "echo")
            .state("B", "fail")
            .state("D", "greet")
            .initial("A")
            .default_state("D")
            .correct_answer("D")
            .transition("A", &["always"], "B", 0)
            .build()
            .unwrap();
        let out = bind(g).run_internal_cycle(&"A".into(), &mut TurnInput::new("x")).unwrap();
        assert_eq!(out.state, "D");
        assert_eq!(out.output.text, "What's bothering you?");
        assert_eq!(out.trace.visited[0].recovered_from, Some("B".into()));
    }

    #[test]
    fn handoff_text_replaces_default_action() {
        let g = FsmGraph::builder()
            .state("A", "echo")
            .state("B", "handoff")
            .state("D", "greet")
            .initial("A")
            .default_state("D")
            .correct_answer("D")
            .transition("A", &["always"], "B", 0)
            .build()
            .unwrap();
        let out = bind(g).run_internal_cycle(&"A".into(), &mut TurnInput::new("x")).unwrap();
        assert_eq!(out.output.text, "Please see a doctor.");
        assert_eq!(out.output.emitted_state, "D");
    }

    #[test]
    fn failing_default_state_is_an_error() {
        let g = FsmGraph::builder()
            .state("A", "echo")
            .state("D", "fail")
            .initial("A")
            .default_state("D")
            .correct_answer("D")
            .build()
            .unwrap();
        let err = bind(g).run_internal_cycle(&"A".into(), &mut TurnInput::new("x")).unwrap_err();
        assert!(matches!(err, CycleError::Action { .. }));
    }

    #[test]
    fn composite_state_runs_child_to_a_final() {
        let child = FsmGraph::builder()
            .state("c0", "greet")
            .state("c1", "echo")
            .initial("c0")
            .default_state("c1")
            .correct_answer("c1")
            .final_state("c1")
            .transition("c0", &["always"], "c1", 0)
            .build()
            .unwrap();
        let g = three_states()
            .transition("A", &["always"], "B", 0)
            .final_state("B")
            .subgraph("B", child)
            .build()
            .unwrap();
        let out = bind(g).run_internal_cycle(&"A".into(), &mut TurnInput::new("hello")).unwrap();
        assert_eq!(out.state, "B");
        assert_eq!(out.output.text, "hello");
        assert_eq!(out.output.emitted_state, "B");
        let sub = out.trace.visited[0].subtrace.as_ref().unwrap();
        assert_eq!(sub.states(), vec![&StateId::from("c0"), &StateId::from("c1")]);
        assert_eq!(sub.terminated_by, Termination::CorrectAnswer);
    }

    #[test]
    fn memoized_predicates_run_once_per_turn() {
        static CALLS: AtomicUsize = AtomicUsize::new(0);
        let mut c = ConditionRegistry::new();
        c.register(
            "svc",
            Memoized(|_: &TurnInput| {
                CALLS.fetch_add(1, Ordering::SeqCst);
                false
            }),
        );
        let g = three_states()
            .transition("A", &["svc", "always"], "B", 0)
            .transition("A", &["!svc"], "A", 1)
            .transition("B", &["svc"], "C", 0)
            .n_attempts(4)
            .build()
            .unwrap();
        let m = Machine::bind(g, c, ActionRegistry::new()).unwrap();
        let out = m.run_internal_cycle(&"A".into(), &mut TurnInput::new("x")).unwrap();
        assert_eq!(out.trace.len(), 4);
        assert_eq!(CALLS.load(Ordering::SeqCst), 1);
        assert_eq!(out.verdicts.get("svc"), Some(&false));
    }

    #[test]
    fn unknown_start_state_is_rejected() {
        let m = bind(three_states().build().unwrap());
        assert!(matches!(m.run_internal_cycle(&"Z".into(), &mut TurnInput::new("x")), Err(CycleError::UnknownState(_))));
    }
}
