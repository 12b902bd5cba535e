use serde::{Deserialize, Serialize};

use super::{PipelineError, RunReport};
use crate::eval::{
    paired_t_test, wilcoxon_signed_rank, MetricsReport, SignificanceReport, TestKind,
};

pub const ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CompareMetric {
    Accuracy,
    MacroF1,
    Kappa,
}

impl CompareMetric {
    fn of(self, m: &MetricsReport) -> f64 {
        match self {
            Self::Accuracy => m.accuracy,
            Self::MacroF1 => m.macro_f1,
            Self::Kappa => m.kappa,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub model_a: String,
    pub model_b: String,
    pub metric: CompareMetric,
    pub fold_ids: Vec<usize>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub result: SignificanceReport,
    pub alpha: f64,
    pub significant: bool,
}

impl Comparison {
    pub fn verdict(&self) -> String {
        format!(
            "{} vs {} on {:?}: {:?} p = {:.6} → {} at α = {}",
            self.model_a,
            self.model_b,
            self.metric,
            self.result.test,
            self.result.p_value,
            if self.significant {
                "significant"
            } else {
                "not significant"
            },
            self.alpha
        )
    }
}

fn fold_scores(
    r: &RunReport,
    model: &str,
    metric: CompareMetric,
) -> Result<Vec<(usize, f64)>, PipelineError> {
    let m = r
        .models
        .get(model)
        .ok_or_else(|| PipelineError::Usage(format!("report has no model {model:?}")))?;
    let mut v: Vec<(usize, f64)> = m
        .folds
        .iter()
        .map(|f| (f.fold.unwrap_or(0), metric.of(f)))
        .collect();
    v.sort_by_key(|p| p.0);
    Ok(v)
}

/// Pair per-fold scores of `model_a` in `a` with `model_b` in `b` by fold id
/// and test the differences `a − b`.
pub fn compare_reports(
    a: &RunReport,
    model_a: &str,
    b: &RunReport,
    model_b: &str,
    metric: CompareMetric,
    test: TestKind,
) -> Result<Comparison, PipelineError> {
    let sa = fold_scores(a, model_a, metric)?;
    let sb = fold_scores(b, model_b, metric)?;
    let ids_a: Vec<usize> = sa.iter().map(|p| p.0).collect();
    let ids_b: Vec<usize> = sb.iter().map(|p| p.0).collect();
    if ids_a != ids_b {
        return Err(PipelineError::FoldMismatch {
            left: ids_a,
            right: ids_b,
        });
    }
    let va: Vec<f64> = sa.iter().map(|p| p.1).collect();
    let vb: Vec<f64> = sb.iter().map(|p| p.1).collect();
    let result = match test {
        TestKind::PairedT => paired_t_test(&va, &vb),
        TestKind::Wilcoxon => wilcoxon_signed_rank(&va, &vb),
    }
    .map_err(|e| PipelineError::Eval {
        context: "compare".into(),
        source: e,
    })?;
    Ok(Comparison {
        model_a: model_a.to_string(),
        model_b: model_b.to_string(),
        metric,
        fold_ids: ids_a,
        a: va,
        b: vb,
        significant: result.p_value < ALPHA,
        result,
        alpha: ALPHA,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::eval::{compute_metrics, confusion_matrix};
    use crate::pipeline::{DatasetSummary, ModelSummary, SplitMode};

    pub(crate) fn report_with(accs: &[(usize, f64)]) -> RunReport {
        let cm = confusion_matrix(&[1, 2], &[1, 2], &[1, 2]).unwrap();
        let folds: Vec<MetricsReport> = accs
            .iter()
            .map(|&(id, acc)| MetricsReport {
                fold: Some(id),
                accuracy: acc,
                ..compute_metrics(&cm)
            })
            .collect();
        let summary = ModelSummary {
            pooled: compute_metrics(&cm),
            folds,
            mean_accuracy: 0.0,
            std_accuracy: 0.0,
            mean_macro_f1: 0.0,
            std_macro_f1: 0.0,
            mean_kappa: 0.0,
        };
        RunReport {
            software_version: String::new(),
            manifest: String::new(),
            config: String::new(),
            split_mode: SplitMode::Kfold,
            seed: 0,
            dataset: DatasetSummary {
                subjects: vec![],
                n_epochs: 0,
                class_counts: BTreeMap::new(),
                feature_names: vec![],
                recordings: vec![],
            },
            folds: vec![],
            models: BTreeMap::from([("ensemble".to_string(), summary)]),
            validation: None,
            final_selection: vec![],
            final_pca_components: None,
        }
    }

    #[test]
    fn self_comparison_is_p_one() {
        let r = report_with(&[(0, 0.8), (1, 0.7), (2, 0.75)]);
        for t in [TestKind::PairedT, TestKind::Wilcoxon] {
            let c = compare_reports(&r, "ensemble", &r, "ensemble", CompareMetric::Accuracy, t)
                .unwrap();
            assert_eq!(c.result.p_value, 1.0);
            assert!(!c.significant);
        }
    }

    #[test]
    fn offset_of_two_points_over_five_folds() {
        let base = [0.81, 0.77, 0.84, 0.79, 0.80];
        let a = report_with(
            &base
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v + 0.02))
                .collect::<Vec<_>>(),
        );
        let b = report_with(&base.iter().copied().enumerate().collect::<Vec<_>>());
        let c = compare_reports(
            &a,
            "ensemble",
            &b,
            "ensemble",
            CompareMetric::Accuracy,
            TestKind::Wilcoxon,
        )
        .unwrap();
        assert!(
            (c.result.p_value - 0.0625).abs() < 1e-12,
            "{}",
            c.result.p_value
        );
        assert!(!c.significant);
        assert!(c.verdict().contains("not significant"));
    }

    #[test]
    fn disjoint_folds_rejected() {
        let a = report_with(&[(0, 0.8), (1, 0.7)]);
        let b = report_with(&[(2, 0.8), (3, 0.7)]);
        let e = compare_reports(
            &a,
            "ensemble",
            &b,
            "ensemble",
            CompareMetric::Accuracy,
            TestKind::PairedT,
        );
        assert!(matches!(e, Err(PipelineError::FoldMismatch { .. })));
        let e = compare_reports(
            &a,
            "svm_rbf",
            &a,
            "ensemble",
            CompareMetric::Accuracy,
            TestKind::PairedT,
        );
        assert!(matches!(e, Err(PipelineError::Usage(_))));
    }
}
