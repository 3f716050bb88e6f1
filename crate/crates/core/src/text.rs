//! Tokenization, token-boundary phrase matching and the TF-IDF vectorizer
//! shared by the classifiers.
//!
//! Tokens are maximal runs of Unicode alphanumeric characters, lowercased.
//! No stemming is applied.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Lowercased, whitespace-normalized form of a phrase: its tokens joined by one space.
pub fn normalize_phrase(phrase: &str) -> String {
    tokenize(phrase).join(" ")
}

/// True when the token sequence of `phrase` occurs contiguously in `tokens`.
pub fn contains_phrase(tokens: &[String], phrase: &[String]) -> bool {
    if phrase.is_empty() || phrase.len() > tokens.len() {
        return false;
    }
    tokens.windows(phrase.len()).any(|w| w == phrase)
}

/// Term-frequency / inverse-document-frequency vectorizer.
///
/// `tf` is the raw count, `idf = ln((1 + N) / (1 + df)) + 1` over the fitting
/// corpus, and each document vector is L2-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdf {
    /// Terms in index order (sorted).
    pub terms: Vec<String>,
    pub idf: Vec<f64>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl TfIdf {
    pub fn from_parts(terms: Vec<String>, idf: Vec<f64>) -> Self {
        assert_eq!(terms.len(), idf.len(), "terms and idf must align");
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { terms, idf, index }
    }

    /// Fits vocabulary and idf weights. Terms with document frequency below
    /// `min_df` are dropped.
    pub fn fit<S: AsRef<str>>(documents: &[S], min_df: usize) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in documents {
            let unique: BTreeSet<String> = tokenize(doc.as_ref()).into_iter().collect();
            for term in unique {
                *df.entry(term).or_insert(0) += 1;
            }
        }
        let n = documents.len() as f64;
        let (terms, idf): (Vec<_>, Vec<_>) = df
            .into_iter()
            .filter(|(_, count)| *count >= min_df.max(1))
            .map(|(term, count)| {
                let weight = ((1.0 + n) / (1.0 + count as f64)).ln() + 1.0;
                (term, weight)
            })
            .unzip();
        Self::from_parts(terms, idf)
    }

    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    pub fn term_index(&self, term: &str) -> Option<usize> {
        if self.index.len() != self.terms.len() {
            // Deserialized without the index; fall back to a scan.
            return self.terms.iter().position(|t| t == term);
        }
        self.index.get(term).copied()
    }

    /// Rebuilds the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn transform(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        for token in tokenize(text) {
            if let Some(i) = self.term_index(&token) {
                v[i] += 1.0;
            }
        }
        for (x, w) in v.iter_mut().zip(&self.idf) {
            *x *= w;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_lowercases_and_splits_on_punctuation() {
        assert_eq!(tokenize("Chest-pain, NOW!"), vec!["chest", "pain", "now"]);
        assert_eq!(tokenize("Привет Мир"), vec!["привет", "мир"]);
        assert!(tokenize("  ?! ").is_empty());
    }

    #[test]
    fn phrase_requires_token_boundaries() {
        let tokens = tokenize("the painkiller helped");
        assert!(!contains_phrase(&tokens, &tokenize("pain")));
        assert!(contains_phrase(&tokens, &tokenize("painkiller helped")));
    }

    #[test]
    fn idf_matches_smoothed_formula() {
        let docs = ["chest pain", "head pain"];
        let v = TfIdf::fit(&docs, 1);
        assert_eq!(v.terms, vec!["chest", "head", "pain"]);
        let rare = (3.0f64 / 2.0).ln() + 1.0;
        assert!((v.idf[0] - rare).abs() < 1e-12);
        assert!((v.idf[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn transform_is_unit_norm_or_zero() {
        let v = TfIdf::fit(&["a b c", "b c d"], 1);
        let x = v.transform("a a d");
        let norm: f64 = x.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(v.transform("zzz").iter().all(|x| *x == 0.0));
    }

    #[test]
    fn deserialized_vectorizer_still_transforms() {
        let v = TfIdf::fit(&["alpha beta", "beta gamma"], 1);
        let json = serde_json::to_string(&v).unwrap();
        let back: TfIdf = serde_json::from_str(&json).unwrap();
        assert_eq!(back.transform("beta"), v.transform("beta"));
    }
}
