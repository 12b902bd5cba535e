//! Tree ensembles, RBF SVM and the soft-voting ensemble.

mod boost;
pub mod bundle;
mod forest;
mod svm;
mod tree;

pub use boost::{BoostParams, Booster};
pub use bundle::{read_sections, write_sections, ModelBundle, BUNDLE_MAGIC, BUNDLE_VERSION};
pub use forest::{Forest, ForestParams};
pub use svm::{
    default_gamma, solve_binary, stratified_cap, BinarySolution, KernelMatrix, Platt, Svm,
    SvmParams,
};
pub use tree::{Binner, Tree, TreeNode};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::SleepStage;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("no training rows")]
    EmptyInput,
    #[error("{rows} rows but {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("non-finite input at row {row}, column {col}")]
    NonFiniteInput { row: usize, col: usize },
    #[error("expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid hyperparameter {name}: {reason}")]
    InvalidHyperparameter { name: &'static str, reason: String },
    #[error("ensemble members disagree on class list")]
    ClassListMismatch,
    #[error(
        "ensemble needs at least two members and non-negative weights summing to a positive value"
    )]
    InvalidEnsemble,
    #[error("not a model bundle (bad magic)")]
    BadMagic,
    #[error("bundle format version {found}, this build reads {expected}")]
    BundleVersionMismatch { found: u32, expected: u32 },
    #[error("bundle checksum mismatch")]
    ChecksumMismatch,
    #[error("bundle truncated or malformed: {0}")]
    MalformedBundle(String),
    #[error("bundle section {0} missing")]
    MissingSection(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    RandomForest,
    GradientBoosting,
    SvmRbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    #[default]
    None,
    InverseFrequency,
}

/// Knobs for all three kinds; each kind reads only its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparameters {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub n_stages: usize,
    pub gb_max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub c: f64,
    pub gamma: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub max_train_rows: usize,
    pub max_bins: usize,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        let f = ForestParams::default();
        let b = BoostParams::default();
        let s = SvmParams::default();
        Self {
            n_trees: f.n_trees,
            max_depth: f.max_depth,
            min_samples_leaf: f.min_samples_leaf,
            max_features: f.max_features,
            bootstrap: f.bootstrap,
            n_stages: b.n_stages,
            gb_max_depth: b.max_depth,
            learning_rate: b.learning_rate,
            lambda: b.lambda,
            c: s.c,
            gamma: s.gamma,
            tol: s.tol,
            max_iter: s.max_iter,
            max_train_rows: s.max_train_rows,
            max_bins: f.max_bins,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    #[serde(default)]
    pub hyper: Hyperparameters,
    #[serde(default)]
    pub class_weighting: ClassWeighting,
    #[serde(default)]
    pub seed: u64,
}

impl ClassifierSpec {
    pub fn new(kind: ClassifierKind) -> Self {
        Self {
            kind,
            hyper: Hyperparameters::default(),
            class_weighting: ClassWeighting::None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let h = &self.hyper;
        let bad = |name, reason: &str| {
            Err(ModelError::InvalidHyperparameter {
                name,
                reason: reason.to_string(),
            })
        };
        match self.kind {
            ClassifierKind::RandomForest if h.n_trees < 1 => bad("n_trees", "must be ≥ 1"),
            ClassifierKind::GradientBoosting
                if !(h.learning_rate > 0.0 && h.learning_rate <= 1.0) =>
            {
                bad("learning_rate", "must lie in (0, 1]")
            }
            ClassifierKind::GradientBoosting if h.lambda < 0.0 => bad("lambda", "must be ≥ 0"),
            ClassifierKind::SvmRbf if !(h.c > 0.0) => bad("c", "must be > 0"),
            ClassifierKind::SvmRbf if h.gamma.is_some_and(|g| !(g > 0.0)) => {
                bad("gamma", "must be > 0")
            }
            ClassifierKind::SvmRbf if h.max_train_rows < 2 => bad("max_train_rows", "must be ≥ 2"),
            _ if h.max_bins < 2 || h.max_bins > 256 => bad("max_bins", "must lie in 2..=256"),
            _ => Ok(()),
        }
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Fitted {
    Constant,
    Forest(Forest),
    Boost(Booster),
    Svm(Svm),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub kind: ClassifierKind,
    /// Classes seen in training, in stage order.
    pub classes: Vec<SleepStage>,
    pub n_features: usize,
    pub seed: u64,
    pub spec_hash: String,
    pub fitted: Fitted,
}

fn check_finite(x: &[Vec<f64>]) -> Result<(), ModelError> {
    for (row, r) in x.iter().enumerate() {
        if let Some(col) = r.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteInput { row, col });
        }
    }
    Ok(())
}

/// Inverse-frequency weights `n / (K · n_c)` per row.
pub fn class_weights(y: &[usize], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &k in y {
        counts[k] += 1;
    }
    let n = y.len() as f64;
    y.iter()
        .map(|&k| n / (n_classes as f64 * counts[k] as f64))
        .collect()
}

pub fn train_classifier(
    spec: &ClassifierSpec,
    x: &[Vec<f64>],
    y: &[SleepStage],
) -> Result<TrainedClassifier, ModelError> {
    spec.validate()?;
    if x.is_empty() {
        return Err(ModelError::EmptyInput);
    }
    if x.len() != y.len() {
        return Err(ModelError::LengthMismatch {
            rows: x.len(),
            labels: y.len(),
        });
    }
    let d = x[0].len();
    if let Some(r) = x.iter().find(|r| r.len() != d) {
        return Err(ModelError::DimensionMismatch {
            expected: d,
            got: r.len(),
        });
    }
    check_finite(x)?;
    let mut classes: Vec<SleepStage> = y.to_vec();
    classes.sort();
    classes.dedup();
    let k = classes.len();
    let yi: Vec<usize> = y
        .iter()
        .map(|s| classes.binary_search(s).expect("class present"))
        .collect();
    let weights = match spec.class_weighting {
        ClassWeighting::None => vec![1.0; y.len()],
        ClassWeighting::InverseFrequency => class_weights(&yi, k),
    };
    let h = &spec.hyper;
    let fitted = if k == 1 {
        Fitted::Constant
    } else {
        match spec.kind {
            ClassifierKind::RandomForest => {
                let p = ForestParams {
                    n_trees: h.n_trees,
                    max_depth: h.max_depth,
                    min_samples_leaf: h.min_samples_leaf,
                    max_features: h.max_features,
                    bootstrap: h.bootstrap,
                    max_bins: h.max_bins,
                };
                Fitted::Forest(Forest::fit(x, &yi, &weights, k, &p, spec.seed))
            }
            ClassifierKind::GradientBoosting => {
                let p = BoostParams {
                    n_stages: h.n_stages,
                    max_depth: h.gb_max_depth,
                    learning_rate: h.learning_rate,
                    lambda: h.lambda,
                    max_bins: h.max_bins,
                    ..Default::default()
                };
                Fitted::Boost(Booster::fit(x, &yi, &weights, k, &p))
            }
            ClassifierKind::SvmRbf => {
                let p = SvmParams {
                    c: h.c,
                    gamma: h.gamma,
                    tol: h.tol,
                    max_iter: h.max_iter,
                    max_train_rows: h.max_train_rows,
                    platt_folds: 3,
                };
                Fitted::Svm(Svm::fit(x, &yi, &weights, k, &p, spec.seed))
            }
        }
    };
    Ok(TrainedClassifier {
        kind: spec.kind,
        classes,
        n_features: d,
        seed: spec.seed,
        spec_hash: spec.hash(),
        fitted,
    })
}

impl TrainedClassifier {
    fn proba_row(&self, x: &[f64]) -> Vec<f64> {
        match &self.fitted {
            Fitted::Constant => vec![1.0],
            Fitted::Forest(f) => f.predict_proba_row(x),
            Fitted::Boost(b) => b.predict_proba_row(x),
            Fitted::Svm(s) => s.predict_proba_row(x),
        }
    }
}

pub fn predict_proba(
    model: &TrainedClassifier,
    x: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, ModelError> {
    if let Some(r) = x.iter().find(|r| r.len() != model.n_features) {
        return Err(ModelError::DimensionMismatch {
            expected: model.n_features,
            got: r.len(),
        });
    }
    Ok(x.par_iter().map(|r| model.proba_row(r)).collect())
}

/// First index of the maximum; classes are in stage order so ties go to
/// the earlier stage.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

pub fn predict(model: &TrainedClassifier, x: &[Vec<f64>]) -> Result<Vec<SleepStage>, ModelError> {
    Ok(predict_proba(model, x)?
        .iter()
        .map(|p| model.classes[argmax(p)])
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub members: Vec<TrainedClassifier>,
    pub weights: Vec<f64>,
}

impl EnsembleModel {
    /// Weights are normalized to sum to 1.
    pub fn new(members: Vec<TrainedClassifier>, weights: Vec<f64>) -> Result<Self, ModelError> {
        if members.len() < 2
            || weights.len() != members.len()
            || weights.iter().any(|w| !(*w >= 0.0))
        {
            return Err(ModelError::InvalidEnsemble);
        }
        let s: f64 = weights.iter().sum();
        if !(s > 0.0) {
            return Err(ModelError::InvalidEnsemble);
        }
        if members.iter().any(|m| m.classes != members[0].classes) {
            return Err(ModelError::ClassListMismatch);
        }
        Ok(Self {
            weights: weights.iter().map(|w| w / s).collect(),
            members,
        })
    }

    pub fn classes(&self) -> &[SleepStage] {
        &self.members[0].classes
    }
}

/// Weighted mean of member probability rows.
pub fn weighted_mean(probs: &[Vec<Vec<f64>>], weights: &[f64]) -> Vec<Vec<f64>> {
    let n = probs[0].len();
    (0..n)
        .map(|i| {
            let k = probs[0][i].len();
            let mut row = vec![0.0; k];
            for (p, &w) in probs.iter().zip(weights) {
                for (a, b) in row.iter_mut().zip(&p[i]) {
                    *a += w * b;
                }
            }
            row
        })
        .collect()
}

pub fn ensemble_soft_vote(
    model: &EnsembleModel,
    x: &[Vec<f64>],
) -> Result<(Vec<SleepStage>, Vec<Vec<f64>>), ModelError> {
    if model
        .members
        .iter()
        .any(|m| m.classes != model.members[0].classes)
    {
        return Err(ModelError::ClassListMismatch);
    }
    let probs = model
        .members
        .iter()
        .map(|m| predict_proba(m, x))
        .collect::<Result<Vec<_>, _>>()?;
    let mean = weighted_mean(&probs, &model.weights);
    let labels = mean.iter().map(|p| model.classes()[argmax(p)]).collect();
    Ok((labels, mean))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;
    use SleepStage::*;

    fn blobs(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<SleepStage>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let (c, s) = if i % 2 == 0 { (-2.5, W) } else { (2.5, N2) };
            x.push(
                (0..3)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        c + z
                    })
                    .collect(),
            );
            y.push(s);
        }
        (x, y)
    }

    fn quick(kind: ClassifierKind) -> ClassifierSpec {
        let mut s = ClassifierSpec::new(kind);
        s.hyper.n_trees = 30;
        s.hyper.n_stages = 30;
        s
    }

    fn accuracy(m: &TrainedClassifier, x: &[Vec<f64>], y: &[SleepStage]) -> f64 {
        let p = predict(m, x).unwrap();
        p.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64
    }

    #[test]
    fn separable_blobs_all_kinds() {
        let (x, y) = blobs(400, 1);
        for kind in [
            ClassifierKind::RandomForest,
            ClassifierKind::GradientBoosting,
            ClassifierKind::SvmRbf,
        ] {
            let m = train_classifier(&quick(kind), &x, &y).unwrap();
            assert!(accuracy(&m, &x, &y) >= 0.99, "{kind:?}");
            for row in predict_proba(&m, &x).unwrap() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|&p| p >= 0.0));
            }
        }
    }

    #[test]
    fn single_class_is_constant() {
        let x = vec![vec![1.0], vec![2.0]];
        let m = train_classifier(&quick(ClassifierKind::SvmRbf), &x, &[N3, N3]).unwrap();
        assert_eq!(predict_proba(&m, &x).unwrap(), vec![vec![1.0], vec![1.0]]);
        assert_eq!(predict(&m, &[vec![9.0]]).unwrap(), vec![N3]);
    }

    #[test]
    fn xor_with_rbf_svm() {
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for i in 0..400 {
            let (cx, cy): (f64, f64) = [(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)][i % 4];
            let nx: f64 = StandardNormal.sample(&mut rng);
            let ny: f64 = StandardNormal.sample(&mut rng);
            x.push(vec![cx + 0.25 * nx, cy + 0.25 * ny]);
            y.push(if cx * cy > 0.0 { W } else { Rem });
        }
        let mut spec = ClassifierSpec::new(ClassifierKind::SvmRbf);
        spec.hyper.gamma = Some(1.0);
        spec.hyper.c = 10.0;
        let m = train_classifier(&spec, &x, &y).unwrap();
        assert!(accuracy(&m, &x, &y) >= 0.9);
    }

    #[test]
    fn forest_depth_zero_proba() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<SleepStage> = (0..10).map(|i| if i < 6 { W } else { N1 }).collect();
        let mut spec = ClassifierSpec::new(ClassifierKind::RandomForest);
        spec.hyper.n_trees = 1;
        spec.hyper.max_depth = Some(0);
        spec.hyper.bootstrap = false;
        let m = train_classifier(&spec, &x, &y).unwrap();
        for row in predict_proba(&m, &x).unwrap() {
            assert_eq!(row, vec![0.6, 0.4]);
        }
    }

    fn prior_model(n_first: usize, n_second: usize) -> TrainedClassifier {
        let x: Vec<Vec<f64>> = (0..n_first + n_second).map(|i| vec![i as f64]).collect();
        let y: Vec<SleepStage> = (0..n_first + n_second)
            .map(|i| if i < n_first { W } else { N1 })
            .collect();
        let mut spec = ClassifierSpec::new(ClassifierKind::RandomForest);
        spec.hyper.n_trees = 1;
        spec.hyper.max_depth = Some(0);
        spec.hyper.bootstrap = false;
        train_classifier(&spec, &x, &y).unwrap()
    }

    #[test]
    fn soft_vote_arithmetic() {
        let a = prior_model(6, 4);
        let b = prior_model(3, 7);
        let x = vec![vec![0.0]];
        let e = EnsembleModel::new(vec![a.clone(), b], vec![1.0, 1.0]).unwrap();
        let (labels, p) = ensemble_soft_vote(&e, &x).unwrap();
        assert!((p[0][0] - 0.45).abs() < 1e-12 && (p[0][1] - 0.55).abs() < 1e-12);
        assert_eq!(labels, vec![N1]);

        let same = EnsembleModel::new(vec![a.clone(), a.clone()], vec![1.0, 1.0]).unwrap();
        assert_eq!(
            ensemble_soft_vote(&same, &x).unwrap().1,
            predict_proba(&a, &x).unwrap()
        );

        let first_only =
            EnsembleModel::new(vec![a.clone(), prior_model(3, 7)], vec![1.0, 0.0]).unwrap();
        assert_eq!(
            ensemble_soft_vote(&first_only, &x).unwrap().1,
            predict_proba(&a, &x).unwrap()
        );
    }

    #[test]
    fn tie_goes_to_earlier_stage() {
        let a = prior_model(5, 5);
        let e = EnsembleModel::new(vec![a.clone(), a], vec![1.0, 1.0]).unwrap();
        assert_eq!(ensemble_soft_vote(&e, &[vec![0.0]]).unwrap().0, vec![W]);
    }

    #[test]
    fn class_list_mismatch() {
        let a = prior_model(5, 5);
        let mut b = a.clone();
        b.classes = vec![W, N2];
        assert!(matches!(
            EnsembleModel::new(vec![a, b], vec![1.0, 1.0]),
            Err(ModelError::ClassListMismatch)
        ));
    }

    #[test]
    fn dimension_and_finiteness_checks() {
        let a = prior_model(5, 5);
        assert!(matches!(
            predict_proba(&a, &[vec![0.0, 1.0]]),
            Err(ModelError::DimensionMismatch { .. })
        ));
        let r = train_classifier(
            &quick(ClassifierKind::RandomForest),
            &[vec![f64::NAN]],
            &[W],
        );
        assert!(matches!(
            r,
            Err(ModelError::NonFiniteInput { row: 0, col: 0 })
        ));
    }

    #[test]
    fn invalid_hyperparameters() {
        let mut s = ClassifierSpec::new(ClassifierKind::GradientBoosting);
        s.hyper.learning_rate = 1.5;
        assert!(s.validate().is_err());
        let mut s = ClassifierSpec::new(ClassifierKind::SvmRbf);
        s.hyper.c = 0.0;
        assert!(s.validate().is_err());
        let mut s = ClassifierSpec::new(ClassifierKind::RandomForest);
        s.hyper.n_trees = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn deterministic_training() {
        let (x, y) = blobs(200, 9);
        for kind in [ClassifierKind::RandomForest, ClassifierKind::SvmRbf] {
            let a = train_classifier(&quick(kind), &x, &y).unwrap();
            let b = train_classifier(&quick(kind), &x, &y).unwrap();
            assert_eq!(a, b);
        }
    }
}
