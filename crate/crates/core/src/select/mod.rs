//! Recursive feature elimination with grouped cross-validation, then PCA.

mod pca;

pub use pca::{pca_fit, pca_fit_with, pca_transform, PcaModel};

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eval::{compute_metrics, confusion_matrix};
use crate::model::{stratified_cap, Forest, ForestParams};
use crate::SleepStage;

#[derive(Debug, thiserror::Error)]
pub enum SelectError {
    #[error("labels contain a single class")]
    DegenerateLabels,
    #[error("all rows are identical; nothing to project")]
    RankZero,
    #[error("expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("fold plan is empty or references rows outside the matrix")]
    BadFolds,
    #[error("invalid variance target {0}")]
    InvalidTarget(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RfecvParams {
    pub step: usize,
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    /// Rows per forest fit (stratified cap).
    pub max_rows: usize,
    pub seed: u64,
}

impl Default for RfecvParams {
    fn default() -> Self {
        Self {
            step: 1,
            n_trees: 50,
            max_depth: Some(12),
            max_rows: 4000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionModel {
    pub n_input: usize,
    /// Kept column indices, ascending.
    pub selected: Vec<usize>,
    /// `(n_features, mean out-of-fold macro-F1)`, ascending in n_features.
    pub curve: Vec<(usize, f64)>,
    pub criterion: String,
    pub folds: usize,
}

impl SelectionModel {
    /// Keeps every column.
    pub fn identity(n_input: usize) -> Self {
        Self {
            n_input,
            selected: (0..n_input).collect(),
            curve: Vec::new(),
            criterion: "none".into(),
            folds: 0,
        }
    }

    pub fn apply(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, SelectError> {
        x.iter()
            .map(|r| {
                if r.len() != self.n_input {
                    return Err(SelectError::DimensionMismatch {
                        expected: self.n_input,
                        got: r.len(),
                    });
                }
                Ok(self.selected.iter().map(|&j| r[j]).collect())
            })
            .collect()
    }

    pub fn write_curve_csv<W: Write>(&self, mut w: W) -> Result<(), SelectError> {
        writeln!(w, "n_features,mean_macro_f1")?;
        for (n, s) in &self.curve {
            writeln!(w, "{n},{s}")?;
        }
        Ok(())
    }
}

fn class_index(y: &[SleepStage]) -> (Vec<SleepStage>, Vec<usize>) {
    let mut classes = y.to_vec();
    classes.sort();
    classes.dedup();
    let idx = y
        .iter()
        .map(|s| classes.binary_search(s).unwrap())
        .collect();
    (classes, idx)
}

struct Rfe<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    params: &'a RfecvParams,
}

impl Rfe<'_> {
    fn forest(&self, rows: &[usize], features: &[usize], stream: u64) -> Forest {
        let ys: Vec<usize> = rows.iter().map(|&i| self.y[i]).collect();
        let keep = stratified_cap(
            &ys,
            self.n_classes,
            self.params.max_rows,
            self.params.seed ^ stream,
        );
        let xs: Vec<Vec<f64>> = keep
            .iter()
            .map(|&k| features.iter().map(|&j| self.x[rows[k]][j]).collect())
            .collect();
        let yk: Vec<usize> = keep.iter().map(|&k| ys[k]).collect();
        let p = ForestParams {
            n_trees: self.params.n_trees,
            max_depth: self.params.max_depth,
            ..Default::default()
        };
        Forest::fit(
            &xs,
            &yk,
            &vec![1.0; yk.len()],
            self.n_classes,
            &p,
            self.params.seed.wrapping_add(stream),
        )
    }

    /// Drops the `step` least important features (ties: higher index first).
    fn eliminate(&self, features: &[usize], importance: &[f64], target: usize) -> Vec<usize> {
        let drop = self.params.step.max(1).min(features.len() - target);
        let mut order: Vec<usize> = (0..features.len()).collect();
        order.sort_by(|&a, &b| importance[a].total_cmp(&importance[b]).then(b.cmp(&a)));
        let dropped: Vec<usize> = order[..drop].to_vec();
        (0..features.len())
            .filter(|p| !dropped.contains(p))
            .map(|p| features[p])
            .collect()
    }

    fn macro_f1(&self, forest: &Forest, rows: &[usize], features: &[usize]) -> f64 {
        let labels: Vec<usize> = (0..self.n_classes).collect();
        let truth: Vec<usize> = rows.iter().map(|&i| self.y[i]).collect();
        let pred: Vec<usize> = rows
            .iter()
            .map(|&i| {
                let r: Vec<f64> = features.iter().map(|&j| self.x[i][j]).collect();
                crate::model::argmax(&forest.predict_proba_row(&r))
            })
            .collect();
        let cm = confusion_matrix(&truth, &pred, &labels).expect("labels in range");
        compute_metrics(&cm).macro_f1
    }
}

/// Scores every feature count out-of-fold, keeps the count with the best mean
/// macro-F1 (ties → fewer features) and reruns elimination on all fold rows
/// to choose the columns.
pub fn rfecv_select(
    x: &[Vec<f64>],
    y: &[SleepStage],
    folds: &[(Vec<usize>, Vec<usize>)],
    params: &RfecvParams,
) -> Result<SelectionModel, SelectError> {
    if folds.is_empty()
        || folds
            .iter()
            .flat_map(|(a, b)| a.iter().chain(b))
            .any(|&i| i >= x.len())
    {
        return Err(SelectError::BadFolds);
    }
    let mut used: Vec<usize> = folds
        .iter()
        .flat_map(|(a, b)| a.iter().chain(b).copied())
        .collect();
    used.sort_unstable();
    used.dedup();
    let d = x[used[0]].len();
    let (classes, yi) = class_index(&used.iter().map(|&i| y[i]).collect::<Vec<_>>());
    if classes.len() < 2 {
        return Err(SelectError::DegenerateLabels);
    }
    // labels indexed by row of x
    let mut y_full = vec![0usize; x.len()];
    for (&i, &k) in used.iter().zip(&yi) {
        y_full[i] = k;
    }
    let rfe = Rfe {
        x,
        y: &y_full,
        n_classes: classes.len(),
        params,
    };

    let per_fold: Vec<Vec<(usize, f64)>> = folds
        .par_iter()
        .enumerate()
        .map(|(f, (train, test))| {
            let mut features: Vec<usize> = (0..d).collect();
            let mut scores = Vec::new();
            loop {
                let forest = rfe.forest(train, &features, f as u64 + 1);
                scores.push((features.len(), rfe.macro_f1(&forest, test, &features)));
                if features.len() == 1 {
                    break;
                }
                features = rfe.eliminate(&features, &forest.importance, 1);
            }
            scores
        })
        .collect();

    let mut curve: Vec<(usize, f64)> = per_fold[0]
        .iter()
        .map(|&(n, _)| {
            let mean = per_fold
                .iter()
                .map(|s| s.iter().find(|(m, _)| *m == n).map_or(0.0, |p| p.1))
                .sum::<f64>()
                / per_fold.len() as f64;
            (n, mean)
        })
        .collect();
    curve.sort_by_key(|&(n, _)| n);
    let mut best = curve[0];
    for &(n, s) in &curve {
        if s > best.1 {
            best = (n, s);
        }
    }

    let mut features: Vec<usize> = (0..d).collect();
    while features.len() > best.0 {
        let forest = rfe.forest(&used, &features, 0);
        features = rfe.eliminate(&features, &forest.importance, best.0);
    }
    Ok(SelectionModel {
        n_input: d,
        selected: features,
        curve,
        criterion: "random_forest_impurity".into(),
        folds: folds.len(),
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;

    #[test]
    fn single_column() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let y: Vec<SleepStage> = (0..40)
            .map(|i| {
                if i < 20 {
                    SleepStage::W
                } else {
                    SleepStage::N2
                }
            })
            .collect();
        let folds = vec![
            (
                (0..40).filter(|i| i % 2 == 0).collect(),
                (0..40).filter(|i| i % 2 == 1).collect(),
            ),
            (
                (0..40).filter(|i| i % 2 == 1).collect(),
                (0..40).filter(|i| i % 2 == 0).collect(),
            ),
        ];
        let s = rfecv_select(&x, &y, &folds, &RfecvParams::default()).unwrap();
        assert_eq!(s.selected, vec![0]);
        assert_eq!(s.curve.len(), 1);
    }

    #[test]
    fn one_class_is_degenerate() {
        let x = vec![vec![0.0, 1.0]; 6];
        let y = vec![SleepStage::W; 6];
        let folds = vec![(vec![0, 1, 2], vec![3, 4, 5])];
        assert!(matches!(
            rfecv_select(&x, &y, &folds, &RfecvParams::default()),
            Err(SelectError::DegenerateLabels)
        ));
    }

    #[test]
    fn rows_outside_folds_are_never_read() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..4).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let y: Vec<SleepStage> = x
            .iter()
            .map(|r| {
                if r[0] > 0.0 {
                    SleepStage::N3
                } else {
                    SleepStage::W
                }
            })
            .collect();
        for r in x.iter_mut().skip(150) {
            r.iter_mut().for_each(|v| *v = f64::NAN);
        }
        let folds = vec![
            ((0..75).collect(), (75..150).collect()),
            ((75..150).collect(), (0..75).collect()),
        ];
        let params = RfecvParams {
            n_trees: 10,
            ..Default::default()
        };
        let s = rfecv_select(&x, &y, &folds, &params).unwrap();
        assert!(s.selected.contains(&0));
    }

    #[test]
    fn curve_csv() {
        let s = SelectionModel {
            n_input: 3,
            selected: vec![1],
            curve: vec![(1, 0.5), (2, 0.25)],
            criterion: "x".into(),
            folds: 2,
        };
        let mut buf = Vec::new();
        s.write_curve_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "n_features,mean_macro_f1\n1,0.5\n2,0.25\n"
        );
        assert_eq!(s.apply(&[vec![1.0, 2.0, 3.0]]).unwrap(), vec![vec![2.0]]);
    }
}
