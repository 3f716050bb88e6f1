//! Static analysis of dialogue graphs: unreachable states, conflicting
//! transitions and cycles that can never be left.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use serde::Serialize;

use super::graph::{FsmGraph, StateId, Transition};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConflictingPair {
    pub first: Transition,
    pub second: Transition,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    /// In declaration order.
    pub unreachable: Vec<StateId>,
    pub conflicting: Vec<ConflictingPair>,
    /// Each cycle lists its states in declaration order.
    pub cycles: Vec<Vec<StateId>>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub subgraphs: BTreeMap<StateId, ValidationReport>,
}

impl ValidationReport {
    /// True when no field, in this graph or any subgraph, reports a finding.
    pub fn is_clean(&self) -> bool {
        self.unreachable.is_empty()
            && self.conflicting.is_empty()
            && self.cycles.is_empty()
            && self.subgraphs.values().all(ValidationReport::is_clean)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.write_text(&mut out, "");
        out
    }

    fn write_text(&self, out: &mut String, prefix: &str) {
        use std::fmt::Write;
        let names = |v: &[StateId]| v.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ");
        let _ = writeln!(out, "{prefix}unreachable: [{}]", names(&self.unreachable));
        let _ = writeln!(out, "{prefix}conflicting:");
        for pair in &self.conflicting {
            let _ = writeln!(out, "{prefix}  - {}  <>  {}", pair.first, pair.second);
        }
        let _ = writeln!(out, "{prefix}cycles:");
        for cycle in &self.cycles {
            let _ = writeln!(out, "{prefix}  - [{}]", names(cycle));
        }
        for (state, sub) in &self.subgraphs {
            let _ = writeln!(out, "{prefix}subgraph {state}:");
            sub.write_text(out, &format!("{prefix}  "));
        }
    }
}

pub fn validate_graph(g: &FsmGraph) -> ValidationReport {
    ValidationReport {
        unreachable: unreachable_states(g),
        conflicting: conflicting_transitions(g),
        cycles: exitless_cycles(g),
        subgraphs: g.subgraphs().iter().map(|(s, child)| (s.clone(), validate_graph(child))).collect(),
    }
}

/// States not reachable from the initial state when every transition is a
/// potential edge and every state may fall back to the default state.
fn unreachable_states(g: &FsmGraph) -> Vec<StateId> {
    let mut adjacency: HashMap<&StateId, Vec<&StateId>> = HashMap::new();
    for t in g.transitions() {
        adjacency.entry(&t.source).or_default().push(&t.target);
    }
    let mut seen: BTreeSet<&StateId> = BTreeSet::new();
    let mut queue = VecDeque::from([g.initial()]);
    seen.insert(g.initial());
    while let Some(q) = queue.pop_front() {
        let targets = adjacency.get(q).into_iter().flatten().copied();
        for next in targets.chain(std::iter::once(g.default_state())) {
            if seen.insert(next) {
                queue.push_back(next);
            }
        }
    }
    g.states().iter().filter(|s| !seen.contains(s)).cloned().collect()
}

/// Pairs of transitions leaving the same state under identical condition
/// sets but heading to different targets.
fn conflicting_transitions(g: &FsmGraph) -> Vec<ConflictingPair> {
    let ts = g.transitions();
    let mut out = Vec::new();
    for (i, a) in ts.iter().enumerate() {
        for b in &ts[i + 1..] {
            if a.source == b.source && a.target != b.target && a.condition_set() == b.condition_set() {
                out.push(ConflictingPair { first: a.clone(), second: b.clone() });
            }
        }
    }
    out
}

/// Strongly connected components with at least one explicit edge that hold
/// no final or correct-answer state and have no explicit transition leaving
/// the component.
fn exitless_cycles(g: &FsmGraph) -> Vec<Vec<StateId>> {
    let mut graph: DiGraph<&StateId, ()> = DiGraph::new();
    let nodes: HashMap<&StateId, NodeIndex> = g.states().iter().map(|s| (s, graph.add_node(s))).collect();
    for t in g.transitions() {
        graph.add_edge(nodes[&t.source], nodes[&t.target], ());
    }
    let order: HashMap<&StateId, usize> = g.states().iter().enumerate().map(|(i, s)| (s, i)).collect();

    let mut cycles = Vec::new();
    for component in tarjan_scc(&graph) {
        let members: BTreeSet<&StateId> = component.iter().map(|&n| graph[n]).collect();
        let has_edge = g
            .transitions()
            .iter()
            .any(|t| members.contains(&t.source) && members.contains(&t.target));
        if !has_edge {
            continue;
        }
        let stops = members.iter().any(|s| g.is_final(s) || *s == g.correct_answer());
        let exits = g
            .transitions()
            .iter()
            .any(|t| members.contains(&t.source) && !members.contains(&t.target));
        if !stops && !exits {
            let mut cycle: Vec<StateId> = members.into_iter().cloned().collect();
            cycle.sort_by_key(|s| order[s]);
            cycles.push(cycle);
        }
    }
    cycles.sort_by_key(|c| order[&c[0]]);
    cycles
}
