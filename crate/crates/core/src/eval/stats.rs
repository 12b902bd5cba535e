use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    PairedT,
    Wilcoxon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceReport {
    pub test: TestKind,
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub mean_diff: f64,
    /// Which p-value branch was used (`exact`, `normal`, `t`, or a
    /// degenerate-case tag).
    pub method: String,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn differences(a: &[f64], b: &[f64]) -> Result<Vec<f64>, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// Two-sided paired t-test on `a − b`. With zero spread in the differences
/// the p-value is 1 when their mean is 0 and `f64::MIN_POSITIVE` otherwise
/// (statistic saturates at ±`f64::MAX`).
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<SignificanceReport, EvalError> {
    let d = differences(a, b)?;
    let n = d.len();
    if n < 2 {
        return Err(EvalError::TooFewPairs { needed: 2, got: n });
    }
    let md = mean(&d);
    let sd = (d.iter().map(|v| (v - md).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let (statistic, p_value, method) = if sd == 0.0 {
        if md == 0.0 {
            (0.0, 1.0, "zero_variance_equal")
        } else {
            (
                f64::MAX.copysign(md),
                f64::MIN_POSITIVE,
                "zero_variance_shifted",
            )
        }
    } else {
        let t = md / (sd / (n as f64).sqrt());
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("df ≥ 1");
        let p = (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0);
        (t, p, "t")
    };
    Ok(SignificanceReport {
        test: TestKind::PairedT,
        statistic,
        p_value,
        n,
        mean_a: mean(a),
        mean_b: mean(b),
        mean_diff: md,
        method: method.into(),
    })
}

/// Average ranks (1-based) of `xs`, ties sharing the mean rank.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Exact two-sided p-value for the signed-rank sum `w_plus` given the
/// (possibly tied) ranks, by counting sign assignments over doubled ranks.
pub fn wilcoxon_exact_p(ranks: &[f64], w_plus: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let max: usize = doubled.iter().sum();
    let mut counts = vec![0.0f64; max + 1];
    counts[0] = 1.0;
    for &r in &doubled {
        for s in (r..=max).rev() {
            counts[s] += counts[s - r];
        }
    }
    let total = 2f64.powi(ranks.len() as i32);
    let t = (2.0 * w_plus).round() as usize;
    let low: f64 = counts[..=t].iter().sum::<f64>() / total;
    let high: f64 = counts[t..].iter().sum::<f64>() / total;
    (2.0 * low.min(high)).min(1.0)
}

/// Wilcoxon signed-rank test on `a − b`, zero differences dropped. Exact for
/// up to 20 non-zero pairs, tie-corrected normal approximation beyond.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<SignificanceReport, EvalError> {
    let all = differences(a, b)?;
    if all.is_empty() {
        return Err(EvalError::TooFewPairs { needed: 1, got: 0 });
    }
    let d: Vec<f64> = all.iter().copied().filter(|&v| v != 0.0).collect();
    let n = d.len();
    let report = |statistic, p_value, method: &str| SignificanceReport {
        test: TestKind::Wilcoxon,
        statistic,
        p_value,
        n,
        mean_a: mean(a),
        mean_b: mean(b),
        mean_diff: mean(&all),
        method: method.into(),
    };
    if n == 0 {
        return Ok(report(0.0, 1.0, "all_zero"));
    }
    let ranks = average_ranks(&d.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let w_plus: f64 = d
        .iter()
        .zip(&ranks)
        .filter(|(v, _)| **v > 0.0)
        .map(|(_, r)| r)
        .sum();
    let total = (n * (n + 1)) as f64 / 2.0;
    let w = w_plus.min(total - w_plus);
    if n <= 20 {
        return Ok(report(w, wilcoxon_exact_p(&ranks, w_plus), "exact"));
    }
    let nf = n as f64;
    let mut tie_term = 0.0;
    let mut sorted = ranks.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&r| r == sorted[i]).count();
        tie_term += (j * j * j - j) as f64;
        i += j;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = (w - nf * (nf + 1.0) / 4.0) / var.sqrt();
    let p = (2.0 * Normal::standard().cdf(-z.abs())).clamp(0.0, 1.0);
    Ok(report(w, p, "normal"))
}
