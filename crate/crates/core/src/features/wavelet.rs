use super::spectral::{BandDefinition, LOG_FLOOR};
use super::time::moments;
use super::FeatureError;
use crate::wavelet::{Scalogram, SubbandSet};

/// Names for the subband block, D1..DL then A_L, followed by the entropy.
pub fn wavelet_feature_names(levels: usize) -> Vec<String> {
    let mut bands: Vec<String> = (1..=levels).map(|k| format!("d{k}")).collect();
    bands.push(format!("a{levels}"));
    let mut names = Vec::with_capacity(bands.len() * 5 + 1);
    for b in &bands {
        for stat in ["log_energy", "rel_energy", "var", "skew", "kurt"] {
            names.push(format!("dwt_{b}_{stat}"));
        }
    }
    names.push("dwt_entropy".into());
    names
}

/// Per-subband log-energy, relative energy, variance, skewness and excess
/// kurtosis, then Shannon entropy of the relative energies.
///
/// An all-zero decomposition gets uniform relative energies and the flag.
pub fn wavelet_band_features(s: &SubbandSet) -> (Vec<f64>, bool) {
    let energies: Vec<f64> = s.bands().map(|b| b.iter().map(|v| v * v).sum()).collect();
    let total: f64 = energies.iter().sum();
    let degenerate = !(total > 0.0);
    let k = energies.len() as f64;
    let rel: Vec<f64> = if degenerate {
        vec![1.0 / k; energies.len()]
    } else {
        energies.iter().map(|e| e / total).collect()
    };

    let mut out = Vec::with_capacity(energies.len() * 5 + 1);
    for ((band, &e), &r) in s.bands().zip(&energies).zip(&rel) {
        let ([var, skew, kurt], _) = moments(band);
        out.extend_from_slice(&[e.max(LOG_FLOOR).ln(), r, var, skew, kurt]);
    }
    let entropy: f64 = rel.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
    out.push(entropy.max(0.0));
    (out, degenerate)
}

pub fn scalogram_feature_names(bands: &[BandDefinition]) -> Vec<String> {
    bands
        .iter()
        .flat_map(|b| ["mean", "std", "max"].map(|s| format!("cwt_{}_{s}", b.name)))
        .collect()
}

/// Fraction of columns dropped at each edge of the scalogram.
pub const SCALOGRAM_EDGE_FRACTION: f64 = 0.1;

/// Mean, standard deviation and maximum of |W| over each band's rows and
/// the interior time columns.
pub fn scalogram_features(
    s: &Scalogram,
    bands: &[BandDefinition],
) -> Result<Vec<f64>, FeatureError> {
    let freqs = s.frequencies();
    let n = s.n_times();
    let edge = (n as f64 * SCALOGRAM_EDGE_FRACTION).floor() as usize;
    let cols = edge..n.saturating_sub(edge).max(edge + 1).min(n);
    let mut out = Vec::with_capacity(bands.len() * 3);
    for band in bands {
        let rows: Vec<usize> = (0..freqs.len())
            .filter(|&r| band.contains(freqs[r]))
            .collect();
        if rows.is_empty() {
            return Err(FeatureError::BandOutsideGrid {
                band: band.name.clone(),
            });
        }
        let (mut sum, mut sum_sq, mut max, mut count) = (0.0, 0.0, 0.0f64, 0usize);
        for &r in &rows {
            for &v in &s.magnitudes[r][cols.clone()] {
                sum += v;
                sum_sq += v * v;
                max = max.max(v);
                count += 1;
            }
        }
        let mean = sum / count as f64;
        let var = (sum_sq / count as f64 - mean * mean).max(0.0);
        out.extend_from_slice(&[mean, var.sqrt(), max]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::features::spectral::canonical_bands;
    use crate::wavelet::{cwt_scalogram, dwt_multilevel, ScaleGrid, WaveletSpec};

    fn sine(freq: f64) -> Vec<f64> {
        (0..3000)
            .map(|i| (2.0 * PI * freq * i as f64 / 100.0).sin())
            .collect()
    }

    #[test]
    fn names_count() {
        assert_eq!(wavelet_feature_names(5).len(), 31);
        assert_eq!(scalogram_feature_names(&canonical_bands()).len(), 12);
        assert_eq!(wavelet_feature_names(5)[25], "dwt_a5_log_energy");
    }

    #[test]
    fn relative_energies_sum_to_one() {
        let x: Vec<f64> = (0..3000).map(|i| ((i * 13) % 29) as f64 - 14.0).collect();
        let (f, deg) = wavelet_band_features(&dwt_multilevel(&x, &WaveletSpec::db4(5)).unwrap());
        assert!(!deg);
        let rel: f64 = (0..6).map(|b| f[b * 5 + 1]).sum();
        assert!((rel - 1.0).abs() < 1e-12);
        assert!(f[30] >= 0.0 && f[30] <= 6f64.ln() + 1e-12);
    }

    #[test]
    fn entropy_extremes() {
        let spec = WaveletSpec::db4(5);
        // all energy in A5
        let s = crate::wavelet::SubbandSet {
            approximation: vec![1.0; 2],
            details: (0..5).map(|k| vec![0.0; 2 << (4 - k)]).collect(),
            original_length: 64,
            spec,
        };
        let (f, _) = wavelet_band_features(&s);
        assert_eq!(f[30], 0.0);

        // equal energy in every band
        let mut s = s;
        s.details = (0..5)
            .map(|k| {
                let n = 2usize << (4 - k);
                vec![(2.0 / n as f64).sqrt(); n]
            })
            .collect();
        let (f, _) = wavelet_band_features(&s);
        assert!((f[30] - 6f64.ln()).abs() < 1e-12);
        assert!((f[30] - 1.7918).abs() < 1e-4);
    }

    #[test]
    fn zero_epoch_flagged() {
        let (f, deg) =
            wavelet_band_features(&dwt_multilevel(&[0.0; 3000], &WaveletSpec::db4(5)).unwrap());
        assert!(deg);
        assert!(f.iter().all(|v| v.is_finite()));
        assert!((f[1] - 1.0 / 6.0).abs() < 1e-15);
        assert!((f[30] - 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn scalogram_alpha_dominates_for_ten_hz() {
        let grid = ScaleGrid::eeg_default(100.0);
        let bands = canonical_bands();
        let f = scalogram_features(&cwt_scalogram(&sine(10.0), &grid).unwrap(), &bands).unwrap();
        let means = [f[0], f[3], f[6], f[9]];
        assert!(
            means[2] > means[0] && means[2] > means[1] && means[2] > means[3],
            "{means:?}"
        );

        let zero =
            scalogram_features(&cwt_scalogram(&[0.0; 3000], &grid).unwrap(), &bands).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalogram_features_scale_linearly() {
        let grid = ScaleGrid::eeg_default(100.0);
        let bands = canonical_bands();
        let x: Vec<f64> = (0..3000)
            .map(|i| (i as f64 * 0.05).sin() + ((i * 17) % 11) as f64 * 0.1)
            .collect();
        let x3: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let a = scalogram_features(&cwt_scalogram(&x, &grid).unwrap(), &bands).unwrap();
        let b = scalogram_features(&cwt_scalogram(&x3, &grid).unwrap(), &bands).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((3.0 * p - q).abs() < 1e-9 * q.abs().max(1.0));
        }
    }

    #[test]
    fn band_outside_grid() {
        let grid = ScaleGrid::log_spaced(2.0, 20.0, 16, 6.0, 100.0).unwrap();
        let s = cwt_scalogram(&[0.0; 300], &grid).unwrap();
        let r = scalogram_features(&s, &[BandDefinition::new("gamma", 30.0, 45.0)]);
        assert!(matches!(r, Err(FeatureError::BandOutsideGrid { .. })));
    }
}
