use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandDefinition {
    pub name: String,
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl BandDefinition {
    pub fn new(name: &str, lo_hz: f64, hi_hz: f64) -> Self {
        Self {
            name: name.to_string(),
            lo_hz,
            hi_hz,
        }
    }

    /// Half-open membership `[lo, hi)`.
    pub fn contains(&self, f: f64) -> bool {
        f >= self.lo_hz && f < self.hi_hz
    }
}

/// Delta, theta, alpha and beta.
pub fn canonical_bands() -> Vec<BandDefinition> {
    vec![
        BandDefinition::new("delta", 0.5, 4.0),
        BandDefinition::new("theta", 4.0, 8.0),
        BandDefinition::new("alpha", 8.0, 13.0),
        BandDefinition::new("beta", 13.0, 30.0),
    ]
}

/// One-sided Welch PSD with periodic Hann segments and per-segment mean
/// removal. Returns `(frequencies, density)`.
pub fn welch_psd(xs: &[f64], fs: f64, segment_s: f64, overlap: f64) -> (Vec<f64>, Vec<f64>) {
    let seg = ((segment_s * fs).round() as usize).clamp(1, xs.len().max(1));
    let step = ((seg as f64 * (1.0 - overlap)).round() as usize).max(1);
    let window: Vec<f64> = (0..seg)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / seg as f64).cos())
        .collect();
    let win_power: f64 = window.iter().map(|w| w * w).sum();
    let n_bins = seg / 2 + 1;
    let mut psd = vec![0.0; n_bins];
    let fft = FftPlanner::new().plan_fft_forward(seg);
    let mut buf = vec![Complex64::new(0.0, 0.0); seg];
    let mut n_segments = 0;
    let mut start = 0;
    while start + seg <= xs.len() {
        let chunk = &xs[start..start + seg];
        let mean = chunk.iter().sum::<f64>() / seg as f64;
        for ((b, &v), &w) in buf.iter_mut().zip(chunk).zip(&window) {
            *b = Complex64::new((v - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (p, c) in psd.iter_mut().zip(&buf) {
            *p += c.norm_sqr();
        }
        n_segments += 1;
        start += step;
    }
    let scale = 1.0 / (fs * win_power * n_segments.max(1) as f64);
    for (k, p) in psd.iter_mut().enumerate() {
        *p *= scale;
        let nyquist = seg % 2 == 0 && k == seg / 2;
        if k != 0 && !nyquist {
            *p *= 2.0;
        }
    }
    let freqs = (0..n_bins).map(|k| k as f64 * fs / seg as f64).collect();
    (freqs, psd)
}

/// Absolute band powers (PSD integrated over each band).
pub fn band_powers(freqs: &[f64], psd: &[f64], bands: &[BandDefinition]) -> Vec<f64> {
    let df = if freqs.len() > 1 {
        freqs[1] - freqs[0]
    } else {
        1.0
    };
    bands
        .iter()
        .map(|b| {
            freqs
                .iter()
                .zip(psd)
                .filter(|(f, _)| b.contains(**f))
                .map(|(_, p)| p * df)
                .sum()
        })
        .collect()
}

pub(crate) const LOG_FLOOR: f64 = 1e-300;

/// Relative powers (normalized by the sum over `bands`) followed by
/// log absolute powers. The flag marks an all-zero spectrum, where relative
/// powers fall back to uniform.
pub fn band_power_features(xs: &[f64], fs: f64, bands: &[BandDefinition]) -> (Vec<f64>, bool) {
    let (freqs, psd) = welch_psd(xs, fs, 4.0, 0.5);
    let abs = band_powers(&freqs, &psd, bands);
    let total: f64 = abs.iter().sum();
    let degenerate = !(total > 0.0);
    let mut out: Vec<f64> = if degenerate {
        vec![1.0 / bands.len() as f64; bands.len()]
    } else {
        abs.iter().map(|p| p / total).collect()
    };
    out.extend(abs.iter().map(|p| p.max(LOG_FLOOR).ln()));
    (out, degenerate)
}

pub fn band_feature_names(bands: &[BandDefinition]) -> Vec<String> {
    bands
        .iter()
        .map(|b| format!("rel_{}", b.name))
        .chain(bands.iter().map(|b| format!("logabs_{}", b.name)))
        .collect()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;

    #[test]
    fn relative_powers_sum_to_one() {
        let x: Vec<f64> = (0..3000)
            .map(|i| ((i * 31) % 17) as f64 + (i as f64 * 0.37).sin())
            .collect();
        let (f, deg) = band_power_features(&x, 100.0, &canonical_bands());
        assert!(!deg);
        assert!((f[..4].iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    /// Periodogram oracle: a windowed 2 Hz tone leaks nothing above 4 Hz
    /// beyond the Hann sidelobes.
    #[test]
    fn two_hz_is_delta() {
        let x: Vec<f64> = (0..3000)
            .map(|i| (2.0 * PI * 2.0 * i as f64 / 100.0).sin())
            .collect();
        let (f, _) = band_power_features(&x, 100.0, &canonical_bands());
        assert!(f[0] >= 0.98, "{}", f[0]);
    }

    #[test]
    fn white_noise_matches_bandwidth_fractions() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let bands = canonical_bands();
        let mut acc = [0.0; 4];
        let reps = 40;
        for _ in 0..reps {
            let x: Vec<f64> = (0..3000).map(|_| StandardNormal.sample(&mut rng)).collect();
            let (f, _) = band_power_features(&x, 100.0, &bands);
            for i in 0..4 {
                acc[i] += f[i] / reps as f64;
            }
        }
        let expected = [3.5 / 29.5, 4.0 / 29.5, 5.0 / 29.5, 17.0 / 29.5];
        for i in 0..4 {
            assert!(
                (acc[i] - expected[i]).abs() < 0.05,
                "band {i}: {} vs {}",
                acc[i],
                expected[i]
            );
        }
    }

    #[test]
    fn parseval_density_scaling() {
        // integral of the one-sided density equals the mean-removed variance
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..4000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (freqs, psd) = welch_psd(&x, 100.0, 4.0, 0.5);
        let df = freqs[1] - freqs[0];
        let total: f64 = psd.iter().sum::<f64>() * df;
        assert!((total - 1.0).abs() < 0.15, "{total}");
    }

    #[test]
    fn zero_signal_is_flagged_uniform() {
        let (f, deg) = band_power_features(&[0.0; 3000], 100.0, &canonical_bands());
        assert!(deg);
        assert_eq!(&f[..4], &[0.25; 4]);
        assert!(f.iter().all(|v| v.is_finite()));
    }
}
