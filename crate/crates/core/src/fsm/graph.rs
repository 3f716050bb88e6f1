use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(String);

impl StateId {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for StateId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

impl From<String> for StateId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl PartialEq<str> for StateId {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for StateId {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

/// A named predicate reference. A leading `!` negates the predicate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Condition(String);

impl Condition {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn id(&self) -> &str {
        &self.0
    }

    pub fn negated(&self) -> bool {
        self.0.starts_with('!')
    }

    /// Registry name of the underlying predicate, without negation.
    pub fn predicate(&self) -> &str {
        self.0.trim_start_matches('!')
    }
}

impl From<&str> for Condition {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub source: StateId,
    pub conditions: Vec<Condition>,
    pub target: StateId,
    /// Lower rank wins when several transitions trigger.
    pub priority: i32,
}

impl Transition {
    pub fn new(source: &str, conditions: &[&str], target: &str, priority: i32) -> Self {
        Self {
            source: source.into(),
            conditions: conditions.iter().map(|c| Condition::from(*c)).collect(),
            target: target.into(),
            priority,
        }
    }

    pub fn condition_set(&self) -> BTreeSet<&Condition> {
        self.conditions.iter().collect()
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let conds: Vec<&str> = self.conditions.iter().map(|c| c.id()).collect();
        write!(f, "{} -[{}]-> {} (priority {})", self.source, conds.join(" & "), self.target, self.priority)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("state names must be non-empty")]
    EmptyStateName,
    #[error("state `{0}` declared twice")]
    DuplicateState(StateId),
    #[error("{role} refers to unknown state `{state}`")]
    UnknownState { role: &'static str, state: StateId },
    #[error("{0} state is not designated")]
    MissingDesignated(&'static str),
    #[error("transition {0} has no conditions")]
    EmptyConditions(String),
    #[error("state `{source_state}` has several transitions at priority {priority}")]
    PriorityTie { source_state: StateId, priority: i32 },
    #[error("n_attempts must be at least 1")]
    ZeroAttempts,
    #[error("state `{0}` has no action")]
    MissingAction(StateId),
}

/// Immutable dialogue graph: states, conditioned transitions, designated
/// initial/default/correct-answer states, final states and the attempt bound
/// of the internal cycle. Composite states own a child graph.
#[derive(Debug, Clone, PartialEq)]
pub struct FsmGraph {
    pub(crate) states: Vec<StateId>,
    pub(crate) transitions: Vec<Transition>,
    pub(crate) initial: StateId,
    pub(crate) default: StateId,
    pub(crate) correct_answer: StateId,
    pub(crate) finals: BTreeSet<StateId>,
    pub(crate) n_attempts: usize,
    pub(crate) actions: BTreeMap<StateId, String>,
    pub(crate) subgraphs: BTreeMap<StateId, FsmGraph>,
}

pub const DEFAULT_ATTEMPTS: usize = 3;

impl FsmGraph {
    pub fn builder() -> GraphBuilder {
        GraphBuilder::default()
    }

    /// States in declaration order.
    pub fn states(&self) -> &[StateId] {
        &self.states
    }

    pub fn contains(&self, q: &StateId) -> bool {
        self.states.contains(q)
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn outgoing<'a>(&'a self, q: &'a StateId) -> impl Iterator<Item = &'a Transition> + 'a {
        self.transitions.iter().filter(move |t| &t.source == q)
    }

    pub fn initial(&self) -> &StateId {
        &self.initial
    }

    pub fn default_state(&self) -> &StateId {
        &self.default
    }

    pub fn correct_answer(&self) -> &StateId {
        &self.correct_answer
    }

    pub fn finals(&self) -> &BTreeSet<StateId> {
        &self.finals
    }

    pub fn is_final(&self, q: &StateId) -> bool {
        self.finals.contains(q)
    }

    pub fn n_attempts(&self) -> usize {
        self.n_attempts
    }

    pub fn action_of(&self, q: &StateId) -> Option<&str> {
        self.actions.get(q).map(String::as_str)
    }

    pub fn actions(&self) -> &BTreeMap<StateId, String> {
        &self.actions
    }

    pub fn subgraph(&self, q: &StateId) -> Option<&FsmGraph> {
        self.subgraphs.get(q)
    }

    pub fn subgraphs(&self) -> &BTreeMap<StateId, FsmGraph> {
        &self.subgraphs
    }

    /// Returns a copy with one transition removed. The result is re-checked.
    pub fn without_transition(&self, index: usize) -> Result<FsmGraph, GraphError> {
        let mut g = self.clone();
        g.transitions.remove(index);
        g.check()?;
        Ok(g)
    }

    fn check(&self) -> Result<(), GraphError> {
        let mut seen = BTreeSet::new();
        for s in &self.states {
            if s.as_str().is_empty() {
                return Err(GraphError::EmptyStateName);
            }
            if !seen.insert(s) {
                return Err(GraphError::DuplicateState(s.clone()));
            }
        }
        let known = |role: &'static str, q: &StateId| {
            if seen.contains(q) {
                Ok(())
            } else {
                Err(GraphError::UnknownState { role, state: q.clone() })
            }
        };
        known("initial", &self.initial)?;
        known("default", &self.default)?;
        known("correct_answer", &self.correct_answer)?;
        for f in &self.finals {
            known("finals", f)?;
        }
        if self.n_attempts == 0 {
            return Err(GraphError::ZeroAttempts);
        }
        let mut ranks = BTreeSet::new();
        for t in &self.transitions {
            known("transition source", &t.source)?;
            known("transition target", &t.target)?;
            if t.conditions.is_empty() {
                return Err(GraphError::EmptyConditions(t.to_string()));
            }
            if !ranks.insert((&t.source, t.priority)) {
                return Err(GraphError::PriorityTie { source_state: t.source.clone(), priority: t.priority });
            }
        }
        for s in &self.states {
            if self.actions.get(s).map_or(true, |a| a.is_empty()) {
                return Err(GraphError::MissingAction(s.clone()));
            }
        }
        for key in self.subgraphs.keys() {
            known("subgraph key", key)?;
        }
        Ok(())
    }
}

#[derive(Debug, Default, Clone)]
pub struct GraphBuilder {
    states: Vec<StateId>,
    actions: BTreeMap<StateId, String>,
    transitions: Vec<Transition>,
    initial: Option<StateId>,
    default: Option<StateId>,
    correct_answer: Option<StateId>,
    finals: BTreeSet<StateId>,
    n_attempts: Option<usize>,
    subgraphs: BTreeMap<StateId, FsmGraph>,
}

impl GraphBuilder {
    /// Declares a state bound to the named action.
    pub fn state(mut self, name: &str, action: &str) -> Self {
        self.states.push(name.into());
        self.actions.insert(name.into(), action.to_string());
        self
    }

    pub fn transition(mut self, source: &str, conditions: &[&str], target: &str, priority: i32) -> Self {
        self.transitions.push(Transition::new(source, conditions, target, priority));
        self
    }

    pub fn push_transition(mut self, t: Transition) -> Self {
        self.transitions.push(t);
        self
    }

    pub fn initial(mut self, q: &str) -> Self {
        self.initial = Some(q.into());
        self
    }

    pub fn default_state(mut self, q: &str) -> Self {
        self.default = Some(q.into());
        self
    }

    pub fn correct_answer(mut self, q: &str) -> Self {
        self.correct_answer = Some(q.into());
        self
    }

    pub fn final_state(mut self, q: &str) -> Self {
        self.finals.insert(q.into());
        self
    }

    pub fn n_attempts(mut self, n: usize) -> Self {
        self.n_attempts = Some(n);
        self
    }

    pub fn subgraph(mut self, q: &str, child: FsmGraph) -> Self {
        self.subgraphs.insert(q.into(), child);
        self
    }

    pub fn build(self) -> Result<FsmGraph, GraphError> {
        let graph = FsmGraph {
            initial: self.initial.ok_or(GraphError::MissingDesignated("initial"))?,
            default: self.default.ok_or(GraphError::MissingDesignated("default"))?,
            correct_answer: self.correct_answer.ok_or(GraphError::MissingDesignated("correct_answer"))?,
            states: self.states,
            transitions: self.transitions,
            finals: self.finals,
            n_attempts: self.n_attempts.unwrap_or(DEFAULT_ATTEMPTS),
            actions: self.actions,
            subgraphs: self.subgraphs,
        };
        graph.check()?;
        Ok(graph)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> GraphBuilder {
        FsmGraph::builder()
            .state("A", "echo")
            .state("B", "echo")
            .initial("A")
            .default_state("B")
            .correct_answer("B")
    }

    #[test]
    fn builds_minimal_graph_with_default_attempts() {
        let g = base().transition("A", &["always"], "B", 0).build().unwrap();
        assert_eq!(g.n_attempts(), DEFAULT_ATTEMPTS);
        assert_eq!(g.outgoing(&"A".into()).count(), 1);
    }

    #[test]
    fn rejects_unknown_endpoint() {
        let err = base().transition("A", &["always"], "Z", 0).build().unwrap_err();
        assert!(matches!(err, GraphError::UnknownState { role: "transition target", .. }));
    }

    #[test]
    fn rejects_empty_conditions() {
        let err = base().transition("A", &[], "B", 0).build().unwrap_err();
        assert!(matches!(err, GraphError::EmptyConditions(_)));
    }

    #[test]
    fn rejects_equal_priority_from_same_source() {
        let err = base()
            .transition("A", &["x"], "B", 1)
            .transition("A", &["y"], "A", 1)
            .build()
            .unwrap_err();
        assert!(matches!(err, GraphError::PriorityTie { priority: 1, .. }));
    }

    #[test]
    fn rejects_zero_attempts_and_bad_finals() {
        assert_eq!(base().n_attempts(0).build().unwrap_err(), GraphError::ZeroAttempts);
        assert!(matches!(base().final_state("Q").build().unwrap_err(), GraphError::UnknownState { .. }));
    }

    #[test]
    fn rejects_duplicate_and_empty_states() {
        assert!(matches!(base().state("A", "echo").build(), Err(GraphError::DuplicateState(_))));
        assert_eq!(base().state("", "echo").build().unwrap_err(), GraphError::EmptyStateName);
    }

    #[test]
    fn negated_condition_names_underlying_predicate() {
        let c = Condition::from("!is_question");
        assert!(c.negated());
        assert_eq!(c.predicate(), "is_question");
    }
}
