//! Gradient boosting of depth-1 regression stumps on the logistic loss.
//!
//! Each round fits a stump to the loss gradient with Newton leaf values,
//! then backtracks the step weight from the learning rate until the
//! training loss does not increase. Training stops early when no step
//! helps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// `left` when `x[feature] <= threshold`, otherwise `right`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub left: f64,
    pub right: f64,
}

impl Stump {
    pub fn value(&self, x: &[f64]) -> f64 {
        if x[self.feature] <= self.threshold {
            self.left
        } else {
            self.right
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedStump {
    pub weight: f64,
    pub stump: Stump,
}

/// `σ(base + Σ weight · stump(x))`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StumpEnsemble {
    pub base: f64,
    pub stumps: Vec<WeightedStump>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean logistic loss of raw margins `f` against 0/1 labels.
pub fn logistic_loss(f: &[f64], y: &[f64]) -> f64 {
    // ln(1 + e^f) - y f, computed stably.
    let total: f64 = f
        .iter()
        .zip(y)
        .map(|(&f, &y)| {
            let softplus = if f > 0.0 { f + (-f).exp().ln_1p() } else { f.exp().ln_1p() };
            softplus - y * f
        })
        .sum();
    total / f.len() as f64
}

impl StumpEnsemble {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base + self.stumps.iter().map(|s| s.weight * s.stump.value(x)).sum::<f64>()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }

    /// Largest feature index used, if any.
    pub fn max_feature(&self) -> Option<usize> {
        self.stumps.iter().map(|s| s.stump.feature).max()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub learning_rate: f64,
    /// L2 regularization of the Newton leaf values.
    pub leaf_l2: f64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self { learning_rate: 0.5, leaf_l2: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoostError {
    #[error("{rows} rows but {labels} labels")]
    Shape { rows: usize, labels: usize },
    #[error("need at least 2 examples")]
    TooFew,
    #[error("rows have inconsistent dimensions")]
    Ragged,
    #[error("labels contain a single class")]
    SingleClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostFit {
    pub ensemble: StumpEnsemble,
    /// Training loss before round 1 and after every completed round.
    pub losses: Vec<f64>,
}

pub fn fit_boosted_stumps(x: &[Vec<f64>], y: &[bool], rounds: usize) -> Result<BoostFit, BoostError> {
    fit_boosted_stumps_with(x, y, rounds, &BoostConfig::default())
}

pub fn fit_boosted_stumps_with(
    x: &[Vec<f64>],
    y: &[bool],
    rounds: usize,
    cfg: &BoostConfig,
) -> Result<BoostFit, BoostError> {
    if x.len() != y.len() {
        return Err(BoostError::Shape { rows: x.len(), labels: y.len() });
    }
    if x.len() < 2 {
        return Err(BoostError::TooFew);
    }
    let dim = x[0].len();
    if x.iter().any(|r| r.len() != dim) {
        return Err(BoostError::Ragged);
    }
    let positives = y.iter().filter(|&&v| v).count();
    if positives == 0 || positives == y.len() {
        return Err(BoostError::SingleClass);
    }
    let yf: Vec<f64> = y.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let rate = positives as f64 / y.len() as f64;
    let base = (rate / (1.0 - rate)).ln();
    let mut ensemble = StumpEnsemble { base, stumps: Vec::new() };
    let mut f = vec![base; x.len()];
    let mut loss = logistic_loss(&f, &yf);
    let mut losses = vec![loss];
    let orders: Vec<Vec<usize>> = (0..dim)
        .map(|j| {
            let mut idx: Vec<usize> = (0..x.len()).collect();
            idx.sort_by(|&a, &b| x[a][j].total_cmp(&x[b][j]));
            idx
        })
        .collect();
    for _ in 0..rounds {
        let p: Vec<f64> = f.iter().map(|&m| sigmoid(m)).collect();
        let g: Vec<f64> = p.iter().zip(&yf).map(|(p, y)| p - y).collect();
        let h: Vec<f64> = p.iter().map(|p| (p * (1.0 - p)).max(1e-12)).collect();
        let Some(stump) = best_stump(x, &g, &h, &orders, cfg.leaf_l2) else { break };
        let delta: Vec<f64> = x.iter().map(|r| stump.value(r)).collect();
        let mut weight = cfg.learning_rate;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = f.iter().zip(&delta).map(|(f, d)| f + weight * d).collect();
            let trial_loss = logistic_loss(&trial, &yf);
            if trial_loss < loss {
                accepted = Some((trial, trial_loss));
                break;
            }
            weight *= 0.5;
        }
        let Some((trial, trial_loss)) = accepted else { break };
        f = trial;
        loss = trial_loss;
        losses.push(loss);
        ensemble.stumps.push(WeightedStump { weight, stump });
    }
    Ok(BoostFit { ensemble, losses })
}

/// Split with the largest second-order gain; ties keep the first feature and
/// the lowest threshold.
fn best_stump(x: &[Vec<f64>], g: &[f64], h: &[f64], orders: &[Vec<usize>], l2: f64) -> Option<Stump> {
    let g_total: f64 = g.iter().sum();
    let h_total: f64 = h.iter().sum();
    let parent = g_total * g_total / (h_total + l2);
    let mut best: Option<(f64, Stump)> = None;
    for (j, order) in orders.iter().enumerate() {
        let (mut gl, mut hl) = (0.0, 0.0);
        for w in 0..order.len() - 1 {
            let i = order[w];
            gl += g[i];
            hl += h[i];
            let (a, b) = (x[i][j], x[order[w + 1]][j]);
            if a == b {
                continue;
            }
            let (gr, hr) = (g_total - gl, h_total - hl);
            let gain = gl * gl / (hl + l2) + gr * gr / (hr + l2) - parent;
            if gain > 1e-12 && best.as_ref().map_or(true, |(bg, _)| gain > *bg) {
                let threshold = a + (b - a) / 2.0;
                best = Some((gain, Stump { feature: j, threshold, left: -gl / (hl + l2), right: -gr / (hr + l2) }));
            }
        }
    }
    best.map(|(_, s)| s)
}
