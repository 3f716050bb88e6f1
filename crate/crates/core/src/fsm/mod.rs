//! Dialogue finite state machine.
//!
//! A graph is `(states, transitions, initial, default, correct_answer,
//! finals, n_attempts, actions)`. Transitions carry a conjunction of named
//! predicates and an integer priority; the transition function picks the
//! lowest-ranked triggered transition and falls back to the default state.
//! Each user turn runs the internal cycle, which alternates transition and
//! output until it lands on a final state, the correct-answer state, or
//! runs out of attempts.

mod document;
mod graph;
mod machine;
mod validate;

pub use document::{
    graph_to_string, load_graph, parse_graph, save_graph, DocumentError, GraphDocument, StateDocument,
    TransitionDocument, GRAPH_SCHEMA_VERSION,
};
pub use graph::{Condition, FsmGraph, GraphBuilder, GraphError, StateId, Transition, DEFAULT_ATTEMPTS};
pub use machine::{
    Action, ActionError, ActionRegistry, BindError, ConditionRegistry, CycleError, CycleOutcome, Machine, Memoized,
    Predicate, Reply, Step, StepTrace, SystemOutput, Termination, TurnInput, TurnMemo,
};
pub use validate::{validate_graph, ConflictingPair, ValidationReport};
