use std::fmt::Display;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Rows are true classes, columns predicted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for (r, o) in self.counts.iter_mut().zip(&other.counts) {
            for (a, b) in r.iter_mut().zip(o) {
                *a += b;
            }
        }
    }
}

pub fn confusion_matrix<T: PartialEq + Display>(
    truth: &[T],
    pred: &[T],
    classes: &[T],
) -> Result<ConfusionMatrix, EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::LengthMismatch(truth.len(), pred.len()));
    }
    if truth.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let pos = |l: &T| {
        classes
            .iter()
            .position(|c| c == l)
            .ok_or_else(|| EvalError::UnknownLabel(l.to_string()))
    };
    let k = classes.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (t, p) in truth.iter().zip(pred) {
        counts[pos(t)?][pos(p)?] += 1;
    }
    Ok(ConfusionMatrix {
        classes: classes.iter().map(|c| c.to_string()).collect(),
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub fold: Option<usize>,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub kappa: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

/// Accuracy, per-class precision/recall/F1, macro-F1 over classes present in
/// the truth, and Cohen's kappa. Undefined ratios are reported as 0.
pub fn compute_metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let k = cm.classes.len();
    let total = cm.total() as f64;
    let row: Vec<u64> = cm.counts.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<u64> = (0..k)
        .map(|j| cm.counts.iter().map(|r| r[j]).sum())
        .collect();
    let diag: Vec<u64> = (0..k).map(|i| cm.counts[i][i]).collect();
    let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|i| {
            let precision = ratio(diag[i], col[i]);
            let recall = ratio(diag[i], row[i]);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                class: cm.classes[i].clone(),
                precision,
                recall,
                f1,
                support: row[i],
            }
        })
        .collect();
    let present: Vec<&ClassMetrics> = per_class.iter().filter(|c| c.support > 0).collect();
    let macro_f1 = if present.is_empty() {
        0.0
    } else {
        present.iter().map(|c| c.f1).sum::<f64>() / present.len() as f64
    };
    let (accuracy, kappa) = if total > 0.0 {
        let agree: u64 = diag.iter().sum();
        // (p_o − p_e)/(1 − p_e) scaled by N² so everything before the final
        // division is exact integer arithmetic.
        let n = cm.total() as i128;
        let chance: i128 = (0..k).map(|i| row[i] as i128 * col[i] as i128).sum();
        let num = n * agree as i128 - chance;
        let den = n * n - chance;
        let kappa = if den == 0 {
            if agree == cm.total() {
                1.0
            } else {
                0.0
            }
        } else {
            num as f64 / den as f64
        };
        (agree as f64 / total, kappa)
    } else {
        (0.0, 0.0)
    };
    MetricsReport {
        fold: None,
        accuracy,
        macro_f1,
        kappa,
        per_class,
        confusion: cm.clone(),
    }
}

pub fn write_confusion_csv<W: Write>(mut w: W, cm: &ConfusionMatrix) -> std::io::Result<()> {
    writeln!(w, "true\\pred,{}", cm.classes.join(","))?;
    for (c, r) in cm.classes.iter().zip(&cm.counts) {
        let cells: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{c},{}", cells.join(","))?;
    }
    Ok(())
}
