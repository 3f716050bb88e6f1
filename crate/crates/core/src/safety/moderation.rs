//! Blacklist moderation.
//!
//! Blacklist files are TOML. Topics may nest; nested tables are flattened
//! to dotted names:
//!
//! ```toml
//! version = 1
//! [topics]
//! off_domain = ["python", "algorithms"]
//! [topics.drugs]
//! recreational = ["buy cocaine"]
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{contains_phrase, normalize_phrase, tokenize};

pub const BLACKLIST_SCHEMA_VERSION: i64 = 1;

#[derive(Debug, Error)]
pub enum BlacklistError {
    #[error("reading blacklist: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing blacklist: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("blacklist schema: {0}")]
    Schema(String),
    #[error("topic `{0}` has no phrases")]
    EmptyTopic(String),
    #[error("topic `{topic}` contains a phrase with no word characters: {phrase:?}")]
    EmptyPhrase { topic: String, phrase: String },
}

/// Prohibited phrases grouped by topic. Phrases are stored normalized
/// (lowercase tokens joined by single spaces).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlacklistTree {
    topics: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModerationVerdict {
    pub flagged: bool,
    /// `(topic, phrase)` hits in topic then phrase order.
    pub matched: Vec<(String, String)>,
}

impl BlacklistTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_topics<T, P, I>(topics: I) -> Result<Self, BlacklistError>
    where
        I: IntoIterator<Item = (T, Vec<P>)>,
        T: Into<String>,
        P: AsRef<str>,
    {
        let mut tree = Self::new();
        for (topic, phrases) in topics {
            let topic = topic.into();
            if phrases.is_empty() {
                return Err(BlacklistError::EmptyTopic(topic));
            }
            for p in phrases {
                tree.insert(&topic, p.as_ref())?;
            }
        }
        Ok(tree)
    }

    pub fn insert(&mut self, topic: &str, phrase: &str) -> Result<(), BlacklistError> {
        let normalized = normalize_phrase(phrase);
        if normalized.is_empty() {
            return Err(BlacklistError::EmptyPhrase { topic: topic.to_string(), phrase: phrase.to_string() });
        }
        self.topics.entry(topic.to_string()).or_default().insert(normalized);
        Ok(())
    }

    pub fn topics(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.topics
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }

    pub fn parse(text: &str) -> Result<Self, BlacklistError> {
        let doc: toml::Table = toml::from_str(text)?;
        match doc.get("version").and_then(|v| v.as_integer()) {
            Some(BLACKLIST_SCHEMA_VERSION) => {}
            other => return Err(BlacklistError::Schema(format!("unsupported version {other:?}"))),
        }
        if let Some(extra) = doc.keys().find(|k| *k != "version" && *k != "topics") {
            return Err(BlacklistError::Schema(format!("unknown key `{extra}`")));
        }
        let topics = doc
            .get("topics")
            .and_then(|t| t.as_table())
            .ok_or_else(|| BlacklistError::Schema("missing [topics] table".into()))?;
        let mut tree = Self::new();
        tree.collect("", topics)?;
        Ok(tree)
    }

    fn collect(&mut self, prefix: &str, table: &toml::Table) -> Result<(), BlacklistError> {
        for (key, value) in table {
            let name = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
            match value {
                toml::Value::Table(child) => self.collect(&name, child)?,
                toml::Value::Array(items) => {
                    if items.is_empty() {
                        return Err(BlacklistError::EmptyTopic(name));
                    }
                    for item in items {
                        let phrase = item
                            .as_str()
                            .ok_or_else(|| BlacklistError::Schema(format!("topic `{name}` must list strings")))?;
                        self.insert(&name, phrase)?;
                    }
                }
                _ => return Err(BlacklistError::Schema(format!("topic `{name}` must be a list or table"))),
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BlacklistError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Token-boundary phrase matching of `text` against every blacklist entry.
pub fn moderate(text: &str, bl: &BlacklistTree) -> ModerationVerdict {
    let tokens = tokenize(text);
    let mut matched = Vec::new();
    for (topic, phrases) in &bl.topics {
        for phrase in phrases {
            let needle: Vec<String> = phrase.split(' ').map(str::to_string).collect();
            if contains_phrase(&tokens, &needle) {
                matched.push((topic.clone(), phrase.clone()));
            }
        }
    }
    ModerationVerdict { flagged: !matched.is_empty(), matched }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bl() -> BlacklistTree {
        BlacklistTree::from_topics([("off_domain", vec!["python", "sorting algorithms"]), ("weapons", vec!["gun"])])
            .unwrap()
    }

    #[test]
    fn empty_text_is_clean() {
        assert_eq!(moderate("", &bl()), ModerationVerdict::default());
    }

    #[test]
    fn verbatim_phrase_flags() {
        let v = moderate("Teach me Sorting  Algorithms, please", &bl());
        assert!(v.flagged);
        assert_eq!(v.matched, vec![("off_domain".to_string(), "sorting algorithms".to_string())]);
    }

    #[test]
    fn substring_inside_token_does_not_flag() {
        // Tokens: ["pythonic", "burgundy"]; neither equals "python" or "gun".
        assert!(!moderate("pythonic burgundy", &bl()).flagged);
    }

    #[test]
    fn parses_nested_topics() {
        let text = "version = 1\n[topics]\noff_domain = [\"Python\"]\n[topics.drugs]\nrecreational = [\"buy  Cocaine\"]\n";
        let tree = BlacklistTree::parse(text).unwrap();
        assert!(tree.topics()["drugs.recreational"].contains("buy cocaine"));
        assert!(tree.topics()["off_domain"].contains("python"));
        let v = moderate("where to BUY cocaine", &tree);
        assert_eq!(v.matched, vec![("drugs.recreational".to_string(), "buy cocaine".to_string())]);
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(matches!(BlacklistTree::parse("version = 2\n[topics]\na=[\"x\"]"), Err(BlacklistError::Schema(_))));
        assert!(matches!(BlacklistTree::parse("version = 1\n[topics]\na=[]"), Err(BlacklistError::EmptyTopic(_))));
        assert!(matches!(BlacklistTree::parse("version = 1\n[topics]\na=[\"?!\"]"), Err(BlacklistError::EmptyPhrase { .. })));
        assert!(matches!(BlacklistTree::parse("version = 1\nextra = 1\n[topics]\na=[\"x\"]"), Err(BlacklistError::Schema(_))));
    }
}
