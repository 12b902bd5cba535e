use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_classification_tree, Binner, Tree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// `None` → ⌈√d⌉.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub max_bins: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 300,
            max_depth: None,
            min_samples_leaf: 1,
            max_features: None,
            bootstrap: true,
            max_bins: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub n_classes: usize,
    /// Mean impurity decrease per feature, normalized to sum 1.
    pub importance: Vec<f64>,
}

impl Forest {
    pub fn fit(
        x: &[Vec<f64>],
        y: &[usize],
        weights: &[f64],
        n_classes: usize,
        params: &ForestParams,
        seed: u64,
    ) -> Self {
        let d = x.first().map_or(0, |r| r.len());
        let binner = Binner::fit(x, params.max_bins);
        let data = binner.transform(x);
        let max_features = params
            .max_features
            .unwrap_or_else(|| ((d as f64).sqrt().ceil() as usize).max(1));
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            max_features: Some(max_features),
        };
        let n = x.len();
        let fitted: Vec<(Tree, Vec<f64>)> = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                let w: Vec<f64> = if params.bootstrap {
                    let mut counts = vec![0u32; n];
                    for _ in 0..n {
                        counts[rng.gen_range(0..n)] += 1;
                    }
                    counts
                        .iter()
                        .zip(weights)
                        .map(|(&c, &w)| c as f64 * w)
                        .collect()
                } else {
                    weights.to_vec()
                };
                let mut imp = vec![0.0; d];
                let tree = fit_classification_tree(
                    &binner,
                    &data,
                    y,
                    &w,
                    n_classes,
                    &tree_params,
                    &mut rng,
                    &mut imp,
                );
                let s: f64 = imp.iter().sum();
                if s > 0.0 {
                    imp.iter_mut().for_each(|v| *v /= s);
                }
                (tree, imp)
            })
            .collect();
        let mut importance = vec![0.0; d];
        for (_, imp) in &fitted {
            for (a, b) in importance.iter_mut().zip(imp) {
                *a += b;
            }
        }
        let s: f64 = importance.iter().sum();
        if s > 0.0 {
            importance.iter_mut().for_each(|v| *v /= s);
        }
        Self {
            trees: fitted.into_iter().map(|(t, _)| t).collect(),
            n_classes,
            importance,
        }
    }

    pub fn predict_proba_row(&self, x: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (a, b) in p.iter_mut().zip(t.leaf_value(x)) {
                *a += b;
            }
        }
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_zero_single_tree_gives_class_frequencies() {
        let x: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let y: Vec<usize> = (0..100).map(|i| usize::from(i >= 60)).collect();
        let params = ForestParams {
            n_trees: 1,
            max_depth: Some(0),
            bootstrap: false,
            ..Default::default()
        };
        let f = Forest::fit(&x, &y, &vec![1.0; 100], 2, &params, 3);
        for r in &x {
            assert_eq!(f.predict_proba_row(r), vec![0.6, 0.4]);
        }
    }

    #[test]
    fn importance_finds_informative_column() {
        let x: Vec<Vec<f64>> = (0..400)
            .map(|i| vec![((i * 13) % 17) as f64, i as f64, ((i * 29) % 31) as f64])
            .collect();
        let y: Vec<usize> = (0..400).map(|i| usize::from(i >= 200)).collect();
        let params = ForestParams {
            n_trees: 20,
            ..Default::default()
        };
        let f = Forest::fit(&x, &y, &vec![1.0; 400], 2, &params, 11);
        assert!(f.importance[1] > 0.5, "{:?}", f.importance);
        assert!((f.importance.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_given_seed() {
        let x: Vec<Vec<f64>> = (0..200)
            .map(|i| vec![(i % 10) as f64, ((i * 7) % 13) as f64])
            .collect();
        let y: Vec<usize> = (0..200).map(|i| (i * 3 % 7) % 3).collect();
        let p = ForestParams {
            n_trees: 8,
            ..Default::default()
        };
        assert_eq!(
            Forest::fit(&x, &y, &vec![1.0; 200], 3, &p, 5),
            Forest::fit(&x, &y, &vec![1.0; 200], 3, &p, 5)
        );
    }
}
