use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::SelectError;

/// Standardize-then-project model. Rows of `components` are orthonormal
/// eigenvectors of the sample covariance, in descending eigenvalue order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Divisors applied after centering (1 for constant columns or when
    /// standardization is off).
    pub scale: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub k: usize,
    pub variance_target: f64,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        let total: f64 = self.eigenvalues.iter().sum();
        self.eigenvalues.iter().map(|e| e / total).collect()
    }
}

pub fn pca_fit(x: &[Vec<f64>], variance_target: f64) -> Result<PcaModel, SelectError> {
    pca_fit_with(x, variance_target, true)
}

pub fn pca_fit_with(
    x: &[Vec<f64>],
    variance_target: f64,
    standardize: bool,
) -> Result<PcaModel, SelectError> {
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(SelectError::InvalidTarget(variance_target));
    }
    let n = x.len();
    if n < 2 {
        return Err(SelectError::TooFewRows { needed: 2, got: n });
    }
    let d = x[0].len();
    if let Some(r) = x.iter().find(|r| r.len() != d) {
        return Err(SelectError::DimensionMismatch {
            expected: d,
            got: r.len(),
        });
    }
    let mean: Vec<f64> = (0..d)
        .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let scale: Vec<f64> = (0..d)
        .map(|j| {
            if !standardize {
                return 1.0;
            }
            let v = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1) as f64;
            if v > 0.0 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let z = DMatrix::from_fn(n, d, |i, j| (x[i][j] - mean[j]) / scale[j]);
    let cov = (z.transpose() * &z) / (n - 1) as f64;
    let cov = (&cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    if !(total > 0.0) {
        return Err(SelectError::RankZero);
    }
    let components: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            if let Some(&first) = v.iter().find(|c| c.abs() > 1e-12) {
                if first < 0.0 {
                    v.iter_mut().for_each(|c| *c = -*c);
                }
            }
            v
        })
        .collect();
    let mut k = 0;
    let mut acc = 0.0;
    while k < d {
        acc += eigenvalues[k];
        k += 1;
        if acc / total >= variance_target - 1e-12 {
            break;
        }
    }
    Ok(PcaModel {
        mean,
        scale,
        components,
        eigenvalues,
        k,
        variance_target,
    })
}

/// `((x − mean) / scale) · componentsᵀ`, truncated to the first `k`.
pub fn pca_transform(model: &PcaModel, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, SelectError> {
    x.iter()
        .map(|r| {
            if r.len() != model.dim() {
                return Err(SelectError::DimensionMismatch {
                    expected: model.dim(),
                    got: r.len(),
                });
            }
            let z: Vec<f64> = r
                .iter()
                .zip(&model.mean)
                .zip(&model.scale)
                .map(|((v, m), s)| (v - m) / s)
                .collect();
            Ok(model.components[..model.k]
                .iter()
                .map(|c| c.iter().zip(&z).map(|(a, b)| a * b).sum())
                .collect())
        })
        .collect()
}
