//! Subject-grouped splits, classification metrics and paired tests.

mod metrics;
mod split;
mod stats;

pub use metrics::{
    compute_metrics, confusion_matrix, write_confusion_csv, ClassMetrics, ConfusionMatrix,
    MetricsReport,
};
pub use split::{kfold_plan, rows_for_subjects, subject_split, Fold, SplitPlan};
pub use stats::{
    paired_t_test, wilcoxon_exact_p, wilcoxon_signed_rank, SignificanceReport, TestKind,
};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("need at least 3 subjects, got {0}")]
    TooFewSubjects(usize),
    #[error("k = {k} is invalid for {n} subjects")]
    KTooLarge { k: usize, n: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("label {0} is not in the class list")]
    UnknownLabel(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} pairs, got {got}")]
    TooFewPairs { needed: usize, got: usize },
    #[error("invalid split ratios {0:?}")]
    InvalidRatios((f64, f64, f64)),
}
