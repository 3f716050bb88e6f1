//! Emergency detection pipeline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::boosting::{fit_boosted_stumps_with, BoostConfig, BoostError, StumpEnsemble};
use super::pca::{max_components, pca_fit, Pca, PcaError};
use crate::bundle::Bundled;
use crate::text::{contains_phrase, tokenize, TfIdf};
use crate::transcript::Transcript;

/// Operating threshold used when none is configured.
pub const DEFAULT_THRESHOLD: f64 = 0.11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub tfidf_block: Vec<f64>,
    pub ohe_block: Vec<f64>,
    pub llm_flag: f64,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.tfidf_block.len() + self.ohe_block.len() + 1
    }

    pub fn concat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.tfidf_block);
        v.extend_from_slice(&self.ohe_block);
        v.push(self.llm_flag);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmergencyModel {
    pub tfidf: TfIdf,
    /// Normalized critical words or phrases, one-hot encoded in order.
    pub critical_words: Vec<String>,
    pub pca: Pca,
    pub scorer: StumpEnsemble,
    pub threshold_t: f64,
}

impl Bundled for EmergencyModel {
    const KIND: &'static str = "emergency";

    fn restore(&mut self) {
        self.tfidf.reindex();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmergencyVerdict {
    pub score: f64,
    pub critical: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model integrity: {0}")]
    Integrity(String),
}

impl EmergencyModel {
    pub fn feature_dim(&self) -> usize {
        self.tfidf.dim() + self.critical_words.len() + 1
    }

    /// Checks that the stages agree on their dimensions.
    pub fn check(&self) -> Result<(), ModelError> {
        let dim = self.feature_dim();
        if self.pca.mean.len() != dim {
            return Err(ModelError::Integrity(format!("pca mean has {} entries, features have {dim}", self.pca.mean.len())));
        }
        if let Some(row) = self.pca.basis.iter().position(|b| b.len() != dim) {
            return Err(ModelError::Integrity(format!("pca basis row {row} has the wrong dimension")));
        }
        if let Some(f) = self.scorer.max_feature() {
            if f >= self.pca.n_components() {
                return Err(ModelError::Integrity(format!(
                    "scorer uses component {f} of {}",
                    self.pca.n_components()
                )));
            }
        }
        if !(self.threshold_t > 0.0 && self.threshold_t < 1.0) {
            return Err(ModelError::Integrity(format!("threshold {} outside (0, 1)", self.threshold_t)));
        }
        Ok(())
    }

    pub fn verdict(&self, score: f64) -> EmergencyVerdict {
        EmergencyVerdict { score, critical: score > self.threshold_t }
    }

    pub fn with_threshold(mut self, t: f64) -> Self {
        self.threshold_t = t;
        self
    }
}

pub fn featurize(w: &Transcript, m: &EmergencyModel, llm_flag: bool) -> FeatureVector {
    let flat = w.flatten();
    let tokens = tokenize(&flat);
    let ohe_block = m
        .critical_words
        .iter()
        .map(|word| {
            let phrase = tokenize(word);
            if contains_phrase(&tokens, &phrase) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    FeatureVector { tfidf_block: m.tfidf.transform(&flat), ohe_block, llm_flag: if llm_flag { 1.0 } else { 0.0 } }
}

pub fn emergency_score(w: &Transcript, m: &EmergencyModel, llm_flag: bool) -> Result<EmergencyVerdict, ModelError> {
    m.check()?;
    let z = m.pca.project(&featurize(w, m, llm_flag).concat());
    Ok(m.verdict(m.scorer.score(&z)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmergencyExample {
    pub transcript: Transcript,
    pub llm_flag: bool,
    pub critical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmergencyTrainConfig {
    pub rounds: usize,
    /// Defaults to `min(feature dim, examples - 1)`.
    pub n_components: Option<usize>,
    pub threshold_t: f64,
    pub min_df: usize,
    pub critical_words: Vec<String>,
    pub boost: BoostConfig,
}

impl Default for EmergencyTrainConfig {
    fn default() -> Self {
        Self {
            rounds: 100,
            n_components: None,
            threshold_t: DEFAULT_THRESHOLD,
            min_df: 1,
            critical_words: Vec::new(),
            boost: BoostConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error(transparent)]
    Pca(#[from] PcaError),
    #[error(transparent)]
    Boost(#[from] BoostError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Fits vocabulary, PCA basis and scorer. Returns the model and the boosting
/// loss trajectory.
pub fn train_emergency(
    examples: &[EmergencyExample],
    cfg: &EmergencyTrainConfig,
) -> Result<(EmergencyModel, Vec<f64>), TrainError> {
    let docs: Vec<String> = examples.iter().map(|e| e.transcript.flatten()).collect();
    let mut critical_words: Vec<String> =
        cfg.critical_words.iter().map(|w| crate::text::normalize_phrase(w)).filter(|w| !w.is_empty()).collect();
    critical_words.dedup();
    let mut model = EmergencyModel {
        tfidf: TfIdf::fit(&docs, cfg.min_df),
        critical_words,
        pca: Pca { mean: Vec::new(), basis: Vec::new() },
        scorer: StumpEnsemble::default(),
        threshold_t: cfg.threshold_t,
    };
    let rows: Vec<Vec<f64>> =
        examples.iter().map(|e| featurize(&e.transcript, &model, e.llm_flag).concat()).collect();
    let n_c = cfg.n_components.unwrap_or_else(|| max_components(rows.len(), model.feature_dim()));
    model.pca = pca_fit(&rows, n_c)?;
    let projected: Vec<Vec<f64>> = rows.iter().map(|r| model.pca.project(r)).collect();
    let labels: Vec<bool> = examples.iter().map(|e| e.critical).collect();
    let fit = fit_boosted_stumps_with(&projected, &labels, cfg.rounds, &cfg.boost)?;
    model.scorer = fit.ensemble;
    model.check()?;
    Ok((model, fit.losses))
}
