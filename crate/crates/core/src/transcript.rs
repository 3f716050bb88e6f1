//! Chat transcripts and per-session context shared by every service.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    System,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::User => "user",
            Role::System => "system",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }
}

/// Ordered user/system messages, oldest first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Transcript {
    messages: Vec<Message>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_messages(messages: Vec<Message>) -> Self {
        Self { messages }
    }

    /// Builds a transcript from alternating `(role, text)` pairs.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (Role, &'a str)>) -> Self {
        Self {
            messages: pairs
                .into_iter()
                .map(|(role, content)| Message { role, content: content.to_string() })
                .collect(),
        }
    }

    pub fn push(&mut self, message: Message) {
        self.messages.push(message);
    }

    pub fn push_user(&mut self, content: impl Into<String>) {
        self.messages.push(Message::user(content));
    }

    pub fn push_system(&mut self, content: impl Into<String>) {
        self.messages.push(Message::system(content));
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Message> {
        self.messages.iter()
    }

    pub fn user_turns(&self) -> usize {
        self.messages.iter().filter(|m| m.role == Role::User).count()
    }

    pub fn last_user(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    pub fn system_messages(&self) -> impl Iterator<Item = &str> {
        self.messages
            .iter()
            .filter(|m| m.role == Role::System)
            .map(|m| m.content.as_str())
    }

    /// Returns a copy with `message` appended as the newest user turn.
    pub fn with_user(&self, message: &str) -> Self {
        let mut out = self.clone();
        out.push_user(message);
        out
    }

    /// Role-prefixed messages joined with newlines, e.g. `"user: a\nsystem: b"`.
    pub fn flatten(&self) -> String {
        let mut out = String::new();
        for (i, m) in self.messages.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push_str(m.role.as_str());
            out.push_str(": ");
            out.push_str(&m.content);
        }
        out
    }
}

impl<'a> IntoIterator for &'a Transcript {
    type Item = &'a Message;
    type IntoIter = std::slice::Iter<'a, Message>;

    fn into_iter(self) -> Self::IntoIter {
        self.messages.iter()
    }
}

/// Demographics from the request envelope plus facts recorded by state actions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionContext {
    pub age: Option<u32>,
    /// Stored as received; the wire format does not define the encoding.
    pub sex: Option<bool>,
    #[serde(default)]
    pub facts: BTreeMap<String, String>,
}

impl SessionContext {
    pub fn flag(&self, name: &str) -> bool {
        self.facts.get(name).is_some_and(|v| v == "true")
    }

    pub fn set_flag(&mut self, name: &str, value: bool) {
        self.facts.insert(name.to_string(), value.to_string());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatten_empty_is_empty() {
        assert_eq!(Transcript::new().flatten(), "");
    }

    #[test]
    fn flatten_single_user_message() {
        let t = Transcript::from_pairs([(Role::User, "a")]);
        assert_eq!(t.flatten(), "user: a");
    }

    #[test]
    fn flatten_joins_with_newline() {
        let t = Transcript::from_pairs([(Role::User, "a"), (Role::System, "b")]);
        assert_eq!(t.flatten(), "user: a\nsystem: b");
    }

    #[test]
    fn serializes_as_plain_array() {
        let t = Transcript::from_pairs([(Role::User, "hi")]);
        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(json, r#"[{"role":"user","content":"hi"}]"#);
    }

    #[test]
    fn flags_roundtrip_through_facts() {
        let mut ctx = SessionContext::default();
        assert!(!ctx.flag("routed"));
        ctx.set_flag("routed", true);
        assert!(ctx.flag("routed"));
    }
}
