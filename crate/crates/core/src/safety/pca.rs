//! Principal component analysis via the symmetric eigendecomposition of the
//! sample covariance.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PcaError {
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("rows have inconsistent dimensions")]
    Ragged,
    #[error("n_c = {n_c} outside 1..={max}")]
    Components { n_c: usize, max: usize },
    #[error("input contains non-finite values")]
    NonFinite,
}

/// Column mean and orthonormal principal directions (rows of `basis`),
/// ordered by decreasing explained variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
}

/// Largest admissible component count for `n` rows of dimension `dim`.
pub fn max_components(n: usize, dim: usize) -> usize {
    dim.min(n.saturating_sub(1))
}

pub fn pca_fit(rows: &[Vec<f64>], n_c: usize) -> Result<Pca, PcaError> {
    let n = rows.len();
    if n < 2 {
        return Err(PcaError::TooFewRows(n));
    }
    let dim = rows[0].len();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(PcaError::Ragged);
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(PcaError::NonFinite);
    }
    let max = max_components(n, dim);
    if n_c == 0 || n_c > max {
        return Err(PcaError::Components { n_c, max });
    }
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, dim, |i, j| rows[i][j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let basis = order
        .into_iter()
        .take(n_c)
        .map(|k| {
            let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
                if *first < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
            }
            v
        })
        .collect();
    Ok(Pca { mean, basis })
}

impl Pca {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.basis.len()
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.basis
            .iter()
            .map(|b| b.iter().zip(x).zip(&self.mean).map(|((b, x), m)| b * (x - m)).sum())
            .collect()
    }

    /// Maps projected coordinates back to centered input space.
    pub fn reconstruct_centered(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.input_dim()];
        for (b, zk) in self.basis.iter().zip(z) {
            for (o, bi) in out.iter_mut().zip(b) {
                *o += zk * bi;
            }
        }
        out
    }
}
