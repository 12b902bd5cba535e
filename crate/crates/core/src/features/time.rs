/// Population central moments m2, m3, m4.
pub(crate) fn central_moments(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in xs {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (m2 / n, m3 / n, m4 / n)
}

/// Variance, skewness, excess kurtosis; the shape terms are 0 when the
/// variance vanishes. Returns whether that happened.
pub(crate) fn moments(xs: &[f64]) -> ([f64; 3], bool) {
    let (m2, m3, m4) = central_moments(xs);
    if m2.is_nan() {
        return ([f64::NAN; 3], false);
    }
    if m2 <= f64::MIN_POSITIVE {
        return ([m2.max(0.0), 0.0, 0.0], true);
    }
    ([m2, m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0], false)
}

fn diff(xs: &[f64]) -> Vec<f64> {
    xs.windows(2).map(|w| w[1] - w[0]).collect()
}

pub const TIME_FEATURE_NAMES: [&str; 6] = [
    "variance",
    "skewness",
    "kurtosis",
    "hjorth_activity",
    "hjorth_mobility",
    "hjorth_complexity",
];

/// Variance, skewness, excess kurtosis and the three Hjorth parameters.
///
/// The boolean is set for zero-variance input, where every shape term is
/// reported as 0.
pub fn time_domain_features(xs: &[f64]) -> ([f64; 6], bool) {
    let ([var, skew, kurt], degenerate) = moments(xs);
    if degenerate {
        return ([var, 0.0, 0.0, var, 0.0, 0.0], true);
    }
    let dx = diff(xs);
    let ddx = diff(&dx);
    let var_d = central_moments(&dx).0;
    let var_dd = central_moments(&ddx).0;
    let mobility = (var_d / var).sqrt();
    let mobility_d = if var_d > 0.0 {
        (var_dd / var_d).sqrt()
    } else {
        0.0
    };
    let complexity = if mobility > 0.0 {
        mobility_d / mobility
    } else {
        0.0
    };
    ([var, skew, kurt, var, mobility, complexity], false)
}
