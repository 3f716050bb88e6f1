//! Evaluation mathematics.
//!
//! Specialty lists are compared pairwise: for an algorithm multiset `A`
//! and an expert multiset `E`, both of size `k`,
//!
//! ```text
//! μ(A, E) = Σ_p Σ_q [a_p = e_q]        χ(A, E) = [μ(A, E) > 0]
//! P@k = Σ μ / (n k²)                     R@k = Σ χ / n
//! ```
//!
//! Labels match on exact, case-insensitive equality.

mod corpus;
mod fixtures;
mod funnel;
mod report;

pub use corpus::{read_corpus, write_corpus, AnnotatedChat, CorpusError};
pub use fixtures::{generate_fixtures, FixtureSpec, CRITICAL_WORDS};
pub use funnel::{funnel_stats, FunnelReport};
pub use report::{MetricEntry, MetricsReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest label-set size accepted.
pub const K_MAX: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("label sets have sizes {0} and {1}; both must equal k")]
    SizeMismatch(usize, usize),
    #[error("k = {0} outside 1..={K_MAX}")]
    BadK(usize),
    #[error("list lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no items to evaluate")]
    Empty,
    #[error("gold value {value} at index {index} is not positive")]
    NonPositiveGold { index: usize, value: f64 },
    #[error("label set {index} has {len} labels, fewer than k = {k}")]
    TooShort { index: usize, len: usize, k: usize },
}

fn norm(label: &str) -> String {
    label.trim().to_lowercase()
}

fn check_sizes(da: &[String], de: &[String]) -> Result<(), MetricError> {
    if da.len() != de.len() {
        return Err(MetricError::SizeMismatch(da.len(), de.len()));
    }
    if da.is_empty() || da.len() > K_MAX {
        return Err(MetricError::BadK(da.len()));
    }
    Ok(())
}

/// Number of index pairs `(p, q)` with matching labels.
pub fn mu(da: &[String], de: &[String]) -> Result<usize, MetricError> {
    check_sizes(da, de)?;
    let de: Vec<String> = de.iter().map(|s| norm(s)).collect();
    Ok(da.iter().map(|a| {
        let a = norm(a);
        de.iter().filter(|e| **e == a).count()
    }).sum())
}

pub fn chi(da: &[String], de: &[String]) -> Result<u8, MetricError> {
    Ok(u8::from(mu(da, de)? > 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairwiseMetrics {
    pub precision: f64,
    pub recall: f64,
    pub n: usize,
    pub k: usize,
}

/// P@k and R@k over `n` chats. Every set must have exactly `k` labels.
pub fn pairwise_metrics(alg: &[Vec<String>], exp: &[Vec<String>], k: usize) -> Result<PairwiseMetrics, MetricError> {
    if k == 0 || k > K_MAX {
        return Err(MetricError::BadK(k));
    }
    if alg.len() != exp.len() {
        return Err(MetricError::LengthMismatch(alg.len(), exp.len()));
    }
    if alg.is_empty() {
        return Err(MetricError::Empty);
    }
    let (mut mu_sum, mut chi_sum) = (0usize, 0usize);
    for (a, e) in alg.iter().zip(exp) {
        if a.len() != k || e.len() != k {
            return Err(MetricError::SizeMismatch(a.len(), e.len()));
        }
        let m = mu(a, e)?;
        mu_sum += m;
        chi_sum += usize::from(m > 0);
    }
    let n = alg.len();
    Ok(PairwiseMetrics {
        precision: mu_sum as f64 / (n * k * k) as f64,
        recall: chi_sum as f64 / n as f64,
        n,
        k,
    })
}

/// [`pairwise_metrics`] on the first `k` labels of each set; a set shorter
/// than `k` is an error.
pub fn pairwise_at_k(alg: &[Vec<String>], exp: &[Vec<String>], k: usize) -> Result<PairwiseMetrics, MetricError> {
    let cut = |sets: &[Vec<String>]| -> Result<Vec<Vec<String>>, MetricError> {
        sets.iter()
            .enumerate()
            .map(|(index, s)| {
                if s.len() < k {
                    Err(MetricError::TooShort { index, len: s.len(), k })
                } else {
                    Ok(s[..k].to_vec())
                }
            })
            .collect()
    };
    pairwise_metrics(&cut(alg)?, &cut(exp)?, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub precision_mean: f64,
    pub precision_se: f64,
    pub recall_mean: f64,
    pub recall_se: f64,
    pub experts: usize,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Metrics of the algorithm against each expert in turn, averaged, with the
/// standard error of the mean across experts. `experts[j][i]` is expert
/// `j`'s label set for chat `i`.
pub fn multi_expert_metrics(
    alg: &[Vec<String>],
    experts: &[Vec<Vec<String>>],
    k: usize,
) -> Result<AggregateMetrics, MetricError> {
    if experts.is_empty() {
        return Err(MetricError::Empty);
    }
    let per: Vec<PairwiseMetrics> =
        experts.iter().map(|e| pairwise_at_k(alg, e, k)).collect::<Result<_, _>>()?;
    let (precision_mean, precision_se) = mean_se(&per.iter().map(|m| m.precision).collect::<Vec<_>>());
    let (recall_mean, recall_se) = mean_se(&per.iter().map(|m| m.recall).collect::<Vec<_>>());
    Ok(AggregateMetrics { precision_mean, precision_se, recall_mean, recall_se, experts: experts.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall, F1 and false-positive rate. Undefined ratios are 0.
pub fn binary_metrics(pred: &[bool], gold: &[bool]) -> Result<BinaryMetrics, MetricError> {
    if pred.len() != gold.len() {
        return Err(MetricError::LengthMismatch(pred.len(), gold.len()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &g) in pred.iter().zip(gold) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Ok(BinaryMetrics { tp, fp, tn, fn_, precision, recall, f1, fpr: ratio(fp, fp + tn) })
}

/// Macro-averaged F1 over the positive and negative classes.
pub fn macro_f1(pred: &[bool], gold: &[bool]) -> Result<f64, MetricError> {
    let pos = binary_metrics(pred, gold)?.f1;
    let inv = |v: &[bool]| v.iter().map(|b| !b).collect::<Vec<_>>();
    let neg = binary_metrics(&inv(pred), &inv(gold))?.f1;
    Ok((pos + neg) / 2.0)
}

/// Mean of `|pred - gold| / gold`.
pub fn mape(pred: &[f64], gold: &[f64]) -> Result<f64, MetricError> {
    if pred.len() != gold.len() {
        return Err(MetricError::LengthMismatch(pred.len(), gold.len()));
    }
    if gold.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut total = 0.0;
    for (index, (&p, &g)) in pred.iter().zip(gold).enumerate() {
        if g.is_nan() || g <= 0.0 {
            return Err(MetricError::NonPositiveGold { index, value: g });
        }
        total += (p - g).abs() / g;
    }
    Ok(total / gold.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(labels: &[&str]) -> Vec<String> {
        labels.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn mu_examples() {
        assert_eq!(mu(&set(&["a", "b"]), &set(&["a", "b"])).unwrap(), 2);
        assert_eq!(mu(&set(&["a", "a"]), &set(&["a", "a"])).unwrap(), 4);
        assert_eq!(mu(&set(&["a", "b"]), &set(&["c", "d"])).unwrap(), 0);
        assert_eq!(mu(&set(&["Neurologist"]), &set(&[" neurologist "])).unwrap(), 1);
        assert_eq!(mu(&set(&["a"]), &set(&["a", "b"])), Err(MetricError::SizeMismatch(1, 2)));
    }

    #[test]
    fn chi_examples() {
        assert_eq!(chi(&set(&["a", "b"]), &set(&["b", "c"])).unwrap(), 1);
        assert_eq!(chi(&set(&["a", "b"]), &set(&["c", "d"])).unwrap(), 0);
        assert_eq!(chi(&set(&["a"]), &set(&["a"])).unwrap(), 1);
    }

    #[test]
    fn pairwise_examples() {
        let a = vec![set(&["a", "b"]), set(&["c", "d"])];
        let m = pairwise_metrics(&a, &a, 2).unwrap();
        assert_eq!((m.precision, m.recall), (0.5, 1.0));
        let d = vec![set(&["x", "y"]), set(&["z", "w"])];
        let m = pairwise_metrics(&a, &d, 2).unwrap();
        assert_eq!((m.precision, m.recall), (0.0, 0.0));
        let m = pairwise_metrics(&[set(&["a", "b", "c"])], &[set(&["a", "x", "y"])], 3).unwrap();
        assert_eq!((m.precision, m.recall), (1.0 / 9.0, 1.0));
    }

    #[test]
    fn at_k_truncates() {
        let alg = vec![set(&["a", "b", "c"])];
        let exp = vec![set(&["b", "a", "z", "q"])];
        assert_eq!(pairwise_at_k(&alg, &exp, 1).unwrap().recall, 0.0);
        assert_eq!(pairwise_at_k(&alg, &exp, 2).unwrap().precision, 2.0 / 4.0);
        assert!(matches!(pairwise_at_k(&alg, &exp, 4), Err(MetricError::TooShort { index: 0, len: 3, k: 4 })));
    }

    #[test]
    fn binary_examples() {
        let m = binary_metrics(&[true, true], &[true, true]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1, m.fpr), (1.0, 1.0, 1.0, 0.0));
        let gold = [true, false, true, false];
        let pred: Vec<bool> = gold.iter().map(|g| !g).collect();
        let m = binary_metrics(&pred, &gold).unwrap();
        assert_eq!((m.f1, m.fpr), (0.0, 1.0));
        let m = binary_metrics(&[false; 4], &gold).unwrap();
        assert_eq!((m.recall, m.fpr, m.precision), (0.0, 0.0, 0.0));
    }

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[4.0, 2.0], &[4.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mape(&[8.0, 4.0], &[4.0, 2.0]).unwrap(), 1.0);
        assert_eq!(mape(&[3.0, 5.0], &[4.0, 4.0]).unwrap(), 0.25);
        assert!(matches!(mape(&[1.0], &[0.0]), Err(MetricError::NonPositiveGold { index: 0, .. })));
    }

    #[test]
    fn aggregate_reports_standard_error() {
        let alg = vec![set(&["a"]), set(&["b"])];
        let e1 = vec![set(&["a"]), set(&["b"])];
        let e2 = vec![set(&["x"]), set(&["b"])];
        let agg = multi_expert_metrics(&alg, &[e1, e2], 1).unwrap();
        assert_eq!(agg.recall_mean, 0.75);
        // values 1.0 and 0.5: sample sd = 0.3535.., se = sd / sqrt(2) = 0.25
        assert!((agg.recall_se - 0.25).abs() < 1e-12);
    }
}
