use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_newton_tree, Binner, Tree};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostParams {
    pub n_stages: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub min_child_weight: f64,
    pub max_bins: usize,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            n_stages: 200,
            max_depth: 3,
            learning_rate: 0.1,
            lambda: 1.0,
            min_child_weight: 1e-3,
            max_bins: 64,
        }
    }
}

/// Multinomial gradient boosting: one Newton regression tree per class and
/// stage on the softmax cross-entropy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Booster {
    pub init: Vec<f64>,
    pub stages: Vec<Vec<Tree>>,
    pub learning_rate: f64,
    /// Weighted mean training cross-entropy, before any stage then after each.
    pub loss_history: Vec<f64>,
}

fn softmax_in_place(f: &mut [f64]) {
    let m = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in f.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    f.iter_mut().for_each(|v| *v /= s);
}

fn cross_entropy(scores: &[Vec<f64>], y: &[usize], w: &[f64]) -> f64 {
    let mut loss = 0.0;
    let mut wsum = 0.0;
    for ((f, &k), &wi) in scores.iter().zip(y).zip(w) {
        let m = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + f.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += wi * (lse - f[k]);
        wsum += wi;
    }
    loss / wsum
}

impl Booster {
    pub fn fit(
        x: &[Vec<f64>],
        y: &[usize],
        weights: &[f64],
        n_classes: usize,
        params: &BoostParams,
    ) -> Self {
        let n = x.len();
        let binner = Binner::fit(x, params.max_bins);
        let data = binner.transform(x);
        let mut prior = vec![0.0; n_classes];
        for (&k, &w) in y.iter().zip(weights) {
            prior[k] += w;
        }
        let total: f64 = prior.iter().sum();
        let init: Vec<f64> = prior.iter().map(|p| (p / total).max(1e-12).ln()).collect();
        let mut scores = vec![init.clone(); n];
        let scale = (n_classes as f64 - 1.0) / n_classes as f64;
        let mut loss_history = vec![cross_entropy(&scores, y, weights)];
        let mut stages = Vec::with_capacity(params.n_stages);
        for _ in 0..params.n_stages {
            let probs: Vec<Vec<f64>> = scores
                .iter()
                .map(|f| {
                    let mut p = f.clone();
                    softmax_in_place(&mut p);
                    p
                })
                .collect();
            let trees: Vec<Tree> = (0..n_classes)
                .into_par_iter()
                .map(|k| {
                    let mut g = vec![0.0; n];
                    let mut h = vec![0.0; n];
                    for i in 0..n {
                        let p = probs[i][k];
                        let target = if y[i] == k { 1.0 } else { 0.0 };
                        g[i] = weights[i] * (p - target);
                        h[i] = weights[i] * (p * (1.0 - p)).max(1e-16);
                    }
                    fit_newton_tree(
                        &binner,
                        &data,
                        &g,
                        &h,
                        params.max_depth,
                        params.min_child_weight,
                        params.lambda,
                        scale,
                    )
                })
                .collect();
            for (row, f) in x.iter().zip(scores.iter_mut()) {
                for (k, t) in trees.iter().enumerate() {
                    f[k] += params.learning_rate * t.leaf_value(row)[0];
                }
            }
            loss_history.push(cross_entropy(&scores, y, weights));
            stages.push(trees);
        }
        Self {
            init,
            stages,
            learning_rate: params.learning_rate,
            loss_history,
        }
    }

    pub fn predict_proba_row(&self, x: &[f64]) -> Vec<f64> {
        let mut f = self.init.clone();
        for trees in &self.stages {
            for (k, t) in trees.iter().enumerate() {
                f[k] += self.learning_rate * t.leaf_value(x)[0];
            }
        }
        softmax_in_place(&mut f);
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_is_non_increasing_on_noisy_labels() {
        let x: Vec<Vec<f64>> = (0..300)
            .map(|i| vec![(i % 17) as f64, ((i * 31) % 23) as f64])
            .collect();
        let y: Vec<usize> = (0..300)
            .map(|i| ((i % 17) / 6 + (i * 7 % 5 == 0) as usize) % 3)
            .collect();
        let params = BoostParams {
            n_stages: 40,
            ..Default::default()
        };
        let b = Booster::fit(&x, &y, &vec![1.0; 300], 3, &params);
        assert_eq!(b.loss_history.len(), 41);
        for w in b.loss_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{w:?}");
        }
        assert!(b.loss_history[40] < b.loss_history[0]);
    }

    #[test]
    fn zero_stages_returns_prior() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y = vec![0, 0, 0, 1, 1, 1, 1, 1, 1, 1];
        let params = BoostParams {
            n_stages: 0,
            ..Default::default()
        };
        let b = Booster::fit(&x, &y, &vec![1.0; 10], 2, &params);
        let p = b.predict_proba_row(&[0.0]);
        assert!((p[0] - 0.3).abs() < 1e-12 && (p[1] - 0.7).abs() < 1e-12);
    }
}
