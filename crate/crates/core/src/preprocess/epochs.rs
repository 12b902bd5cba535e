use serde::{Deserialize, Serialize};

use super::PreprocessError;
use crate::edf::{Hypnogram, SignalTrace, EPOCH_SECONDS};
use crate::stage::SleepStage;

// Successive samples closer than this (µV) count as a flat run.
const FLAT_EPS_UV: f64 = 1e-6;

/// One 30 s segment with its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub subject: String,
    pub night: String,
    pub index: usize,
    pub stage: SleepStage,
    pub fs: f64,
    pub samples: Vec<f64>,
    pub artifact: bool,
    /// max |x| of the samples at segmentation time (µV before normalization).
    pub peak_abs_uv: f64,
    /// Fraction of successive-sample steps below the flat threshold.
    pub flat_fraction: f64,
}

impl EpochRecord {
    pub fn new(
        subject: &str,
        night: &str,
        index: usize,
        stage: SleepStage,
        fs: f64,
        samples: Vec<f64>,
    ) -> Self {
        let peak_abs_uv = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let flat_fraction = flat_fraction(&samples);
        Self {
            subject: subject.to_string(),
            night: night.to_string(),
            index,
            stage,
            fs,
            samples,
            artifact: false,
            peak_abs_uv,
            flat_fraction,
        }
    }

    pub fn key(&self) -> String {
        format!("{}/{}/{}", self.subject, self.night, self.index)
    }
}

fn flat_fraction(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 1.0;
    }
    let flat = xs
        .windows(2)
        .filter(|w| (w[1] - w[0]).abs() < FLAT_EPS_UV)
        .count();
    flat as f64 / (xs.len() - 1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactPolicy {
    pub amplitude_limit_uv: f64,
    pub max_flat_fraction: f64,
}

impl Default for ArtifactPolicy {
    fn default() -> Self {
        Self {
            amplitude_limit_uv: 250.0,
            max_flat_fraction: 0.9,
        }
    }
}

impl ArtifactPolicy {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.amplitude_limit_uv > 0.0 && (0.0..=1.0).contains(&self.max_flat_fraction) {
            Ok(())
        } else {
            Err(PreprocessError::InvalidPolicy(format!("{self:?}")))
        }
    }

    pub fn is_artifact(&self, epoch: &EpochRecord) -> bool {
        epoch.peak_abs_uv > self.amplitude_limit_uv || epoch.flat_fraction > self.max_flat_fraction
    }
}

/// Mean and population standard deviation of a recording.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZScore {
    pub mean: f64,
    pub std: f64,
}

impl ZScore {
    pub fn fit(samples: &[f64]) -> Result<Self, PreprocessError> {
        if samples.is_empty() {
            return Err(PreprocessError::Empty);
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 0.0) || !std.is_finite() {
            return Err(PreprocessError::ZeroVariance);
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, xs: &mut [f64]) {
        for v in xs {
            *v = (*v - self.mean) / self.std;
        }
    }
}

/// Standardize a whole recording to zero mean and unit population variance.
pub fn zscore_normalize(trace: &SignalTrace) -> Result<SignalTrace, PreprocessError> {
    let z = ZScore::fit(&trace.samples)?;
    let mut samples = trace.samples.clone();
    z.apply(&mut samples);
    Ok(SignalTrace {
        label: trace.label.clone(),
        fs: trace.fs,
        samples,
    })
}

/// Cut a trace into labelled 30 s epochs, skipping `Excluded` stages.
pub fn segment_epochs(
    trace: &SignalTrace,
    hyp: &Hypnogram,
    subject: &str,
    night: &str,
) -> Result<Vec<EpochRecord>, PreprocessError> {
    let per_epoch = trace.fs * EPOCH_SECONDS;
    if !(per_epoch > 0.0) || (per_epoch - per_epoch.round()).abs() > 1e-9 {
        return Err(PreprocessError::SamplingMismatch { fs: trace.fs });
    }
    let per_epoch = per_epoch.round() as usize;
    let count = (trace.samples.len() / per_epoch).min(hyp.len());
    Ok((0..count)
        .filter(|&i| hyp.stages[i].is_scored())
        .map(|i| {
            let samples = trace.samples[i * per_epoch..(i + 1) * per_epoch].to_vec();
            EpochRecord::new(subject, night, i, hyp.stages[i], trace.fs, samples)
        })
        .collect())
}

/// Split epochs into kept and rejected by the amplitude and flat-line rules.
/// Order is preserved.
pub fn reject_artifacts(
    epochs: Vec<EpochRecord>,
    policy: &ArtifactPolicy,
) -> (Vec<EpochRecord>, usize) {
    let before = epochs.len();
    let kept: Vec<EpochRecord> = epochs
        .into_iter()
        .filter(|e| !policy.is_artifact(e))
        .map(|mut e| {
            e.artifact = false;
            e
        })
        .collect();
    let rejected = before - kept.len();
    (kept, rejected)
}

/// Keep epochs within `margin` epochs of the first and last non-wake epoch.
/// `None` disables trimming; an all-wake night is returned unchanged.
pub fn trim_wake_margins(epochs: Vec<EpochRecord>, margin: Option<usize>) -> Vec<EpochRecord> {
    let Some(margin) = margin else {
        return epochs;
    };
    let sleep = epochs
        .iter()
        .filter(|e| e.stage != SleepStage::W)
        .map(|e| e.index);
    let (Some(first), Some(last)) = (sleep.clone().min(), sleep.max()) else {
        return epochs;
    };
    let lo = first.saturating_sub(margin);
    let hi = last.saturating_add(margin);
    epochs
        .into_iter()
        .filter(|e| (lo..=hi).contains(&e.index))
        .collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn hyp(stages: Vec<SleepStage>) -> Hypnogram {
        Hypnogram {
            source: "t".into(),
            stages,
            floored_events: 0,
        }
    }

    fn epoch_of(samples: Vec<f64>) -> EpochRecord {
        EpochRecord::new("s", "1", 0, SleepStage::N2, 100.0, samples)
    }

    #[test]
    fn zscore_small_example() {
        let t = SignalTrace::new("x", 1.0, vec![1.0, 2.0, 3.0]);
        let z = zscore_normalize(&t).unwrap();
        let e = 1.224744871391589;
        for (a, b) in z.samples.iter().zip([-e, 0.0, e]) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn zscore_idempotent_and_constant_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = SignalTrace::new(
            "x",
            100.0,
            (0..5000).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        let once = zscore_normalize(&t).unwrap();
        let twice = zscore_normalize(&once).unwrap();
        for (a, b) in once.samples.iter().zip(&twice.samples) {
            assert!((a - b).abs() < 1e-9);
        }
        let n = once.samples.len() as f64;
        let mean = once.samples.iter().sum::<f64>() / n;
        let var = once.samples.iter().map(|v| v * v).sum::<f64>() / n - mean * mean;
        assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);

        let c = SignalTrace::new("x", 100.0, vec![4.0; 10]);
        assert!(matches!(
            zscore_normalize(&c),
            Err(PreprocessError::ZeroVariance)
        ));
    }

    #[test]
    fn segment_one_epoch() {
        let t = SignalTrace::new("x", 100.0, vec![1.0; 3000]);
        let e = segment_epochs(&t, &hyp(vec![SleepStage::N2]), "s", "1").unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].samples.len(), 3000);
        assert_eq!(e[0].stage, SleepStage::N2);

        let short = SignalTrace::new("x", 100.0, vec![1.0; 2999]);
        assert!(segment_epochs(&short, &hyp(vec![SleepStage::N2]), "s", "1")
            .unwrap()
            .is_empty());
    }

    #[test]
    fn segment_skips_excluded() {
        let t = SignalTrace::new("x", 100.0, (0..9000).map(f64::from).collect());
        let e = segment_epochs(
            &t,
            &hyp(vec![SleepStage::W, SleepStage::Excluded, SleepStage::N1]),
            "s",
            "1",
        )
        .unwrap();
        assert_eq!(e.iter().map(|r| r.index).collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(e[1].samples[0], 6000.0);
    }

    #[test]
    fn segment_rejects_fractional_epoch_length() {
        let t = SignalTrace::new("x", 33.35, vec![0.0; 5000]);
        assert!(matches!(
            segment_epochs(&t, &hyp(vec![SleepStage::W]), "s", "1"),
            Err(PreprocessError::SamplingMismatch { .. })
        ));
    }

    #[test]
    fn artifact_rules() {
        let policy = ArtifactPolicy::default();
        let mut spike: Vec<f64> = (0..3000).map(|i| 50.0 * (i as f64 * 0.3).sin()).collect();
        spike[1500] = 500.0;
        let sine: Vec<f64> = (0..3000).map(|i| 50.0 * (i as f64 * 0.3).sin()).collect();
        let (kept, rejected) = reject_artifacts(
            vec![
                epoch_of(spike),
                epoch_of(vec![0.0; 3000]),
                epoch_of(sine.clone()),
            ],
            &policy,
        );
        assert_eq!(rejected, 2);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].samples, sine);
        assert!(!kept[0].artifact);
    }

    #[test]
    fn wake_trim_index_arithmetic() {
        let stages: Vec<SleepStage> = (0..1000)
            .map(|i| {
                if (500..600).contains(&i) {
                    SleepStage::N2
                } else {
                    SleepStage::W
                }
            })
            .collect();
        let epochs: Vec<EpochRecord> = stages
            .iter()
            .enumerate()
            .map(|(i, &s)| EpochRecord::new("s", "1", i, s, 100.0, vec![0.0; 2]))
            .collect();
        let kept = trim_wake_margins(epochs.clone(), Some(60));
        assert_eq!(kept.first().unwrap().index, 440);
        assert_eq!(kept.last().unwrap().index, 659);
        assert_eq!(kept.len(), 220);
        assert_eq!(trim_wake_margins(epochs.clone(), None), epochs);

        let all_wake: Vec<EpochRecord> = (0..10)
            .map(|i| EpochRecord::new("s", "1", i, SleepStage::W, 100.0, vec![0.0; 2]))
            .collect();
        assert_eq!(trim_wake_margins(all_wake.clone(), Some(60)), all_wake);
    }

    proptest! {
        #[test]
        fn segments_partition_prefix(len in 0usize..20_000, n_hyp in 0usize..10) {
            let t = SignalTrace::new("x", 100.0, (0..len).map(|i| i as f64).collect());
            let h = hyp(vec![SleepStage::N2; n_hyp]);
            let e = segment_epochs(&t, &h, "s", "1").unwrap();
            prop_assert_eq!(e.len(), (len / 3000).min(n_hyp));
            let joined: Vec<f64> = e.iter().flat_map(|r| r.samples.iter().copied()).collect();
            prop_assert_eq!(&joined[..], &t.samples[..joined.len()]);
        }

        #[test]
        fn rejection_preserves_order_and_counts(peaks in proptest::collection::vec(0.0f64..500.0, 0..30)) {
            let epochs: Vec<EpochRecord> = peaks
                .iter()
                .enumerate()
                .map(|(i, &p)| EpochRecord::new("s", "1", i, SleepStage::N2, 100.0, vec![p, -p / 2.0, p / 3.0]))
                .collect();
            let n = epochs.len();
            let (kept, rejected) = reject_artifacts(epochs, &ArtifactPolicy::default());
            prop_assert_eq!(kept.len() + rejected, n);
            prop_assert!(kept.windows(2).all(|w| w[0].index < w[1].index));
        }
    }
}
