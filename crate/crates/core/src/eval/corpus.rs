//! Annotated corpus files: one JSON object per line.
//!
//! ```json
//! {"id":"chat-1","transcript":[{"role":"user","content":"..."}],
//!  "experts":[["Neurologist","Therapist"]],"algorithm":["Neurologist","ENT"],
//!  "emergency":false,"llm_flag":false,"question":null,"ready":null,"anamnesis_turns":null}
//! ```
//!
//! Every label field is optional; tools use the records that carry the
//! labels they need.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transcript::Transcript;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedChat {
    pub id: String,
    pub transcript: Transcript,
    /// One specialty label set per expert.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub experts: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emergency: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_flag: Option<bool>,
    /// The last user message is a clarifying question.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<bool>,
    /// Enough information has been collected to route.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ready: Option<bool>,
    /// Total user turns of information collection in the full dialogue.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anamnesis_turns: Option<u32>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus line {line}: {source}")]
    Line { line: usize, source: serde_json::Error },
}

pub fn read_corpus(reader: impl BufRead) -> Result<Vec<AnnotatedChat>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| CorpusError::Line { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn write_corpus(mut writer: impl Write, chats: &[AnnotatedChat]) -> Result<(), CorpusError> {
    for chat in chats {
        let line = serde_json::to_string(chat).map_err(|source| CorpusError::Line { line: 0, source })?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transcript::Role;

    #[test]
    fn roundtrip() {
        let chats = vec![AnnotatedChat {
            id: "c1".into(),
            transcript: Transcript::from_pairs([(Role::User, "chest pain")]),
            experts: vec![vec!["Cardiologist".into()]],
            emergency: Some(true),
            ..Default::default()
        }];
        let mut buf = Vec::new();
        write_corpus(&mut buf, &chats).unwrap();
        assert_eq!(read_corpus(buf.as_slice()).unwrap(), chats);
    }

    #[test]
    fn reports_bad_line() {
        let text = "{\"id\":\"a\",\"transcript\":[]}\n{oops}\n";
        assert!(matches!(read_corpus(text.as_bytes()), Err(CorpusError::Line { line: 2, .. })));
    }
}
