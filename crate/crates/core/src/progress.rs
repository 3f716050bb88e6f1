//! Readiness estimation and question detection.
//!
//! Both are logistic regressions over `[tfidf(text), embed(text)]`; the
//! readiness model appends the number of user turns as one more feature and
//! carries a ridge-regression head predicting how many turns of information
//! collection remain.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{AdapterError, Embedder, EmbedderSpec};
use crate::bundle::Bundled;
use crate::safety::sigmoid;
use crate::text::TfIdf;
use crate::transcript::Transcript;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProgressKind {
    Question,
    Readiness,
    /// Candidate-question relevance, used by the information collector.
    Relevance,
}

impl ProgressKind {
    pub fn uses_turn_count(self) -> bool {
        self == ProgressKind::Readiness
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionHead {
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearTextModel {
    pub kind: ProgressKind,
    pub tfidf: TfIdf,
    pub embedder: EmbedderSpec,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub decision_threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remaining_head: Option<RegressionHead>,
}

impl Bundled for LinearTextModel {
    const KIND: &'static str = "linear-text";

    fn restore(&mut self) {
        self.tfidf.reindex();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuestionVerdict {
    pub is_question: bool,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadinessVerdict {
    pub ready: bool,
    pub score: f64,
    pub predicted_remaining_turns: u32,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProgressError {
    #[error("readiness needs at least one user message")]
    EmptyHistory,
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("weights have {weights} entries, features have {features}")]
    Dimension { weights: usize, features: usize },
    #[error(transparent)]
    Embedding(#[from] AdapterError),
}

pub const DEFAULT_DECISION_THRESHOLD: f64 = 0.5;
/// Embedding dimension of freshly trained progress models.
pub const DEFAULT_PROGRESS_EMBED_DIM: usize = 64;

impl LinearTextModel {
    /// A model with all weights zero; every score is 0.5.
    pub fn zero(kind: ProgressKind, embedder: EmbedderSpec) -> Self {
        let tfidf = TfIdf::from_parts(Vec::new(), Vec::new());
        let dim = embedder.dimension + usize::from(kind.uses_turn_count());
        Self {
            kind,
            tfidf,
            embedder,
            weights: vec![0.0; dim],
            bias: 0.0,
            decision_threshold: DEFAULT_DECISION_THRESHOLD,
            remaining_head: None,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.tfidf.dim() + self.embedder.dimension + usize::from(self.kind.uses_turn_count())
    }

    pub fn features(&self, text: &str, turns: usize) -> Result<Vec<f64>, ProgressError> {
        let embedder = self.embedder.build()?;
        self.features_with(embedder.as_ref(), text, turns)
    }

    fn features_with(&self, embedder: &dyn Embedder, text: &str, turns: usize) -> Result<Vec<f64>, ProgressError> {
        let mut x = self.tfidf.transform(text);
        x.extend(embedder.embed(text)?);
        if self.kind.uses_turn_count() {
            x.push(turns as f64);
        }
        Ok(x)
    }

    pub fn score_features(&self, x: &[f64]) -> Result<f64, ProgressError> {
        if x.len() != self.weights.len() {
            return Err(ProgressError::Dimension { weights: self.weights.len(), features: x.len() });
        }
        Ok(sigmoid(self.bias + dot(&self.weights, x)))
    }

    pub fn score(&self, text: &str, turns: usize) -> Result<f64, ProgressError> {
        self.score_features(&self.features(text, turns)?)
    }

    pub fn decide(&self, score: f64) -> bool {
        score >= self.decision_threshold
    }

    pub fn with_threshold(mut self, t: f64) -> Self {
        self.decision_threshold = t;
        self
    }

    fn remaining(&self, x: &[f64]) -> u32 {
        match &self.remaining_head {
            Some(h) if h.weights.len() == x.len() => {
                let r = h.bias + dot(&h.weights, x);
                if r.is_finite() {
                    r.max(0.0).round() as u32
                } else {
                    0
                }
            }
            _ => 0,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn detect_question(message: &str, m: &LinearTextModel) -> Result<QuestionVerdict, ProgressError> {
    let score = m.score(message, 0)?;
    Ok(QuestionVerdict { is_question: m.decide(score), score })
}

/// Scores the flattened transcript plus its user-turn count.
pub fn estimate_readiness(history: &Transcript, m: &LinearTextModel) -> Result<ReadinessVerdict, ProgressError> {
    let turns = history.user_turns();
    if turns == 0 {
        return Err(ProgressError::EmptyHistory);
    }
    let x = m.features(&history.flatten(), turns)?;
    let score = m.score_features(&x)?;
    Ok(ReadinessVerdict { ready: m.decide(score), score, predicted_remaining_turns: m.remaining(&x) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearExample {
    pub text: String,
    #[serde(default)]
    pub turns: usize,
    pub label: bool,
    /// Readiness only: turns of information collection still to come.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remaining_turns: Option<f64>,
}

impl LinearExample {
    pub fn message(text: impl Into<String>, label: bool) -> Self {
        Self { text: text.into(), turns: 0, label, remaining_turns: None }
    }

    pub fn history(t: &Transcript, label: bool, remaining_turns: Option<f64>) -> Self {
        Self { text: t.flatten(), turns: t.user_turns(), label, remaining_turns }
    }
}

/// Mean logistic loss plus `l2 / 2 · ‖w‖²`; parameters are `[w.., bias]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticObjective {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub l2: f64,
}

impl LogisticObjective {
    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len) + 1
    }

    fn margin(&self, params: &[f64], row: &[f64]) -> f64 {
        let (w, b) = params.split_at(params.len() - 1);
        dot(w, row) + b[0]
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        let margins: Vec<f64> = self.x.iter().map(|r| self.margin(params, r)).collect();
        let (w, _) = params.split_at(params.len() - 1);
        crate::safety::logistic_loss(&margins, &self.y) + 0.5 * self.l2 * dot(w, w)
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let n = self.x.len() as f64;
        let mut g = vec![0.0; params.len()];
        let last = params.len() - 1;
        for (row, y) in self.x.iter().zip(&self.y) {
            let r = (sigmoid(self.margin(params, row)) - y) / n;
            for (gi, xi) in g.iter_mut().zip(row) {
                *gi += r * xi;
            }
            g[last] += r;
        }
        for (gi, wi) in g[..last].iter_mut().zip(&params[..last]) {
            *gi += self.l2 * wi;
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearTrainConfig {
    pub embedder: EmbedderSpec,
    pub min_df: usize,
    pub l2: f64,
    pub max_epochs: usize,
    /// Stop once the gradient norm falls below this.
    pub tolerance: f64,
    pub decision_threshold: f64,
    /// Ridge penalty of the remaining-turns head.
    pub head_l2: f64,
}

impl Default for LinearTrainConfig {
    fn default() -> Self {
        Self {
            embedder: EmbedderSpec::test(DEFAULT_PROGRESS_EMBED_DIM),
            min_df: 1,
            l2: 1e-3,
            max_epochs: 400,
            tolerance: 1e-5,
            decision_threshold: DEFAULT_DECISION_THRESHOLD,
            head_l2: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub model: LinearTextModel,
    /// Objective value before the first epoch and after each epoch.
    pub losses: Vec<f64>,
}

/// Gradient descent with Armijo backtracking, so every accepted step lowers
/// the objective.
pub fn minimize(obj: &LogisticObjective, max_epochs: usize, tolerance: f64) -> (Vec<f64>, Vec<f64>) {
    let mut params = vec![0.0; obj.dim()];
    let mut loss = obj.loss(&params);
    let mut losses = vec![loss];
    let mut step = 1.0;
    for _ in 0..max_epochs {
        let g = obj.gradient(&params);
        let g2 = dot(&g, &g);
        if g2.sqrt() < tolerance {
            break;
        }
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = params.iter().zip(&g).map(|(p, g)| p - step * g).collect();
            let trial_loss = obj.loss(&trial);
            if trial_loss <= loss - 1e-4 * step * g2 {
                accepted = Some((trial, trial_loss));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, trial_loss)) = accepted else { break };
        params = trial;
        loss = trial_loss;
        losses.push(loss);
        step = (step * 2.0).min(64.0);
    }
    (params, losses)
}

/// Untrained model (vocabulary fitted) and the training objective over its
/// features.
pub fn linear_objective(
    corpus: &[LinearExample],
    kind: ProgressKind,
    cfg: &LinearTrainConfig,
) -> Result<(LinearTextModel, LogisticObjective), ProgressError> {
    if corpus.is_empty() {
        return Err(ProgressError::EmptyCorpus);
    }
    let positives = corpus.iter().filter(|e| e.label).count();
    if positives == 0 || positives == corpus.len() {
        return Err(ProgressError::SingleClass);
    }
    let texts: Vec<&str> = corpus.iter().map(|e| e.text.as_str()).collect();
    let model = LinearTextModel {
        kind,
        tfidf: TfIdf::fit(&texts, cfg.min_df),
        embedder: cfg.embedder.clone(),
        weights: Vec::new(),
        bias: 0.0,
        decision_threshold: cfg.decision_threshold,
        remaining_head: None,
    };
    let embedder = cfg.embedder.build()?;
    let x = corpus
        .iter()
        .map(|e| model.features_with(embedder.as_ref(), &e.text, e.turns))
        .collect::<Result<Vec<_>, _>>()?;
    let y = corpus.iter().map(|e| if e.label { 1.0 } else { 0.0 }).collect();
    Ok((model, LogisticObjective { x, y, l2: cfg.l2 }))
}

pub fn fit_linear(
    corpus: &[LinearExample],
    kind: ProgressKind,
    cfg: &LinearTrainConfig,
) -> Result<LinearFit, ProgressError> {
    let (mut model, obj) = linear_objective(corpus, kind, cfg)?;
    let (params, losses) = minimize(&obj, cfg.max_epochs, cfg.tolerance);
    model.bias = params[params.len() - 1];
    model.weights = params[..params.len() - 1].to_vec();
    if kind == ProgressKind::Readiness {
        let targets: Vec<(usize, f64)> =
            corpus.iter().enumerate().filter_map(|(i, e)| e.remaining_turns.map(|r| (i, r))).collect();
        if !targets.is_empty() {
            model.remaining_head = Some(ridge(&obj.x, &targets, cfg.head_l2));
        }
    }
    Ok(LinearFit { model, losses })
}

/// Ridge regression with an unpenalized intercept, solved in closed form.
fn ridge(x: &[Vec<f64>], targets: &[(usize, f64)], l2: f64) -> RegressionHead {
    let dim = x[0].len();
    let a = DMatrix::from_fn(targets.len(), dim + 1, |r, c| if c == dim { 1.0 } else { x[targets[r].0][c] });
    let b = DVector::from_iterator(targets.len(), targets.iter().map(|t| t.1));
    let mut gram = a.transpose() * &a;
    for i in 0..dim {
        gram[(i, i)] += l2;
    }
    let rhs = a.transpose() * b;
    let solution = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| gram.lu().solve(&rhs))
        .unwrap_or_else(|| DVector::zeros(dim + 1));
    RegressionHead { weights: solution.rows(0, dim).iter().copied().collect(), bias: solution[dim] }
}
