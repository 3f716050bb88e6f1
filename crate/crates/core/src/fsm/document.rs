//! TOML graph definition files.
//!
//! ```toml
//! version = 1
//! initial = "Start"
//! default = "Fallback"
//! correct_answer = "Done"
//! finals = ["Done"]
//! n_attempts = 3
//!
//! [[states]]
//! name = "Start"
//! action = "greet"
//!
//! [[transitions]]
//! from = "Start"
//! to = "Done"
//! when = ["always"]
//! priority = 0
//! ```
//!
//! A state may carry a nested `[states.subgraph]` table with the same schema.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::graph::{Condition, FsmGraph, GraphBuilder, GraphError, Transition, DEFAULT_ATTEMPTS};

pub const GRAPH_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("reading graph file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing graph file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("writing graph file: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("unsupported graph schema version {0}")]
    Version(u32),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDocument {
    pub version: u32,
    pub initial: String,
    pub default: String,
    pub correct_answer: String,
    #[serde(default)]
    pub finals: Vec<String>,
    #[serde(default = "default_attempts")]
    pub n_attempts: usize,
    pub states: Vec<StateDocument>,
    #[serde(default)]
    pub transitions: Vec<TransitionDocument>,
}

fn default_attempts() -> usize {
    DEFAULT_ATTEMPTS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDocument {
    pub name: String,
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgraph: Option<Box<GraphDocument>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionDocument {
    pub from: String,
    pub to: String,
    pub when: Vec<String>,
    #[serde(default)]
    pub priority: i32,
}

impl GraphDocument {
    pub fn into_graph(self) -> Result<FsmGraph, DocumentError> {
        if self.version != GRAPH_SCHEMA_VERSION {
            return Err(DocumentError::Version(self.version));
        }
        let mut b: GraphBuilder = FsmGraph::builder()
            .initial(&self.initial)
            .default_state(&self.default)
            .correct_answer(&self.correct_answer)
            .n_attempts(self.n_attempts);
        for f in &self.finals {
            b = b.final_state(f);
        }
        for s in self.states {
            b = b.state(&s.name, &s.action);
            if let Some(child) = s.subgraph {
                b = b.subgraph(&s.name, child.into_graph()?);
            }
        }
        for t in self.transitions {
            b = b.push_transition(Transition {
                source: t.from.into(),
                conditions: t.when.into_iter().map(Condition::new).collect(),
                target: t.to.into(),
                priority: t.priority,
            });
        }
        Ok(b.build()?)
    }

    pub fn from_graph(g: &FsmGraph) -> Self {
        Self {
            version: GRAPH_SCHEMA_VERSION,
            initial: g.initial().to_string(),
            default: g.default_state().to_string(),
            correct_answer: g.correct_answer().to_string(),
            finals: g.states().iter().filter(|s| g.is_final(s)).map(|s| s.to_string()).collect(),
            n_attempts: g.n_attempts(),
            states: g
                .states()
                .iter()
                .map(|s| StateDocument {
                    name: s.to_string(),
                    action: g.action_of(s).unwrap_or_default().to_string(),
                    subgraph: g.subgraph(s).map(|c| Box::new(GraphDocument::from_graph(c))),
                })
                .collect(),
            transitions: g
                .transitions()
                .iter()
                .map(|t| TransitionDocument {
                    from: t.source.to_string(),
                    to: t.target.to_string(),
                    when: t.conditions.iter().map(|c| c.id().to_string()).collect(),
                    priority: t.priority,
                })
                .collect(),
        }
    }
}

pub fn parse_graph(text: &str) -> Result<FsmGraph, DocumentError> {
    let doc: GraphDocument = toml::from_str(text)?;
    doc.into_graph()
}

pub fn graph_to_string(g: &FsmGraph) -> Result<String, DocumentError> {
    Ok(toml::to_string_pretty(&GraphDocument::from_graph(g))?)
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<FsmGraph, DocumentError> {
    parse_graph(&std::fs::read_to_string(path)?)
}

pub fn save_graph(g: &FsmGraph, path: impl AsRef<Path>) -> Result<(), DocumentError> {
    std::fs::write(path, graph_to_string(g)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
version = 1
initial = "A"
default = "B"
correct_answer = "B"
finals = ["B"]

[[states]]
name = "A"
action = "echo"

[[states]]
name = "B"
action = "echo"

[states.subgraph]
version = 1
initial = "b0"
default = "b0"
correct_answer = "b0"

[[states.subgraph.states]]
name = "b0"
action = "silent"

[[transitions]]
from = "A"
to = "B"
when = ["always", "!is_question"]
priority = 2
"#;

    #[test]
    fn parses_sample_with_subgraph() {
        let g = parse_graph(SAMPLE).unwrap();
        assert_eq!(g.n_attempts(), DEFAULT_ATTEMPTS);
        assert_eq!(g.transitions()[0].priority, 2);
        assert!(g.transitions()[0].conditions[1].negated());
        assert_eq!(g.subgraph(&"B".into()).unwrap().initial(), "b0");
    }

    #[test]
    fn roundtrip_preserves_graph() {
        let g = parse_graph(SAMPLE).unwrap();
        let text = graph_to_string(&g).unwrap();
        assert_eq!(parse_graph(&text).unwrap(), g);
    }

    #[test]
    fn rejects_unknown_version_and_fields() {
        let bad = SAMPLE.replacen("version = 1", "version = 7", 1);
        assert!(matches!(parse_graph(&bad), Err(DocumentError::Version(7))));
        let extra = format!("colour = \"red\"\n{SAMPLE}");
        assert!(matches!(parse_graph(&extra), Err(DocumentError::Parse(_))));
    }

    #[test]
    fn structural_errors_surface() {
        let bad = SAMPLE.replace("to = \"B\"", "to = \"Nowhere\"");
        assert!(matches!(parse_graph(&bad), Err(DocumentError::Graph(GraphError::UnknownState { .. }))));
    }
}
