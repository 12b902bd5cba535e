use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PipelineConfig, PipelineError};
use crate::edf::{discover_recordings, expand_hypnogram, EdfFile, RecordingPair};
use crate::features::{assemble_features, FeatureMatrix};
use crate::preprocess::{
    bandpass_filter, reject_artifacts, segment_epochs, trim_wake_margins, EpochRecord, ZScore,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingStats {
    pub id: String,
    pub hypnogram_epochs: usize,
    /// Scored epochs cut from the signal (Excluded already dropped).
    pub segmented: usize,
    pub artifacts_rejected: usize,
    pub wake_trimmed: usize,
    pub kept: usize,
    pub floored_events: usize,
}

#[derive(Debug, Clone)]
pub struct PreparedRecording {
    pub pair: RecordingPair,
    pub epochs: Vec<EpochRecord>,
    pub stats: RecordingStats,
}

/// Recording pairs under the configured data root, limited to the first
/// `max_subjects` subjects.
pub fn discover(cfg: &PipelineConfig) -> Result<Vec<RecordingPair>, PipelineError> {
    let dir = cfg.resolve_data_dir()?;
    let mut pairs = discover_recordings(&dir).map_err(|e| PipelineError::edf(&dir, e))?;
    if let Some(max) = cfg.max_subjects {
        let mut subjects: Vec<String> = pairs.iter().map(|p| p.subject.clone()).collect();
        subjects.dedup();
        subjects.truncate(max);
        pairs.retain(|p| subjects.contains(&p.subject));
    }
    if pairs.is_empty() {
        return Err(PipelineError::NoRecordings(dir));
    }
    Ok(pairs)
}

/// Read → band-pass → segment → reject artifacts → trim wake → z-score.
///
/// Artifact thresholds apply to the filtered signal in µV. The z-score is
/// fitted on the samples of the epochs that survive, so hours of
/// pre-recording wake and rejected bursts do not set the scale.
pub fn prepare_recording(
    pair: &RecordingPair,
    cfg: &PipelineConfig,
) -> Result<PreparedRecording, PipelineError> {
    let id = pair.id();
    let ctx = |e| PipelineError::Preprocess {
        context: id.clone(),
        source: e,
    };
    let mut psg = EdfFile::open(&pair.psg).map_err(|e| PipelineError::edf(&pair.psg, e))?;
    let trace = psg
        .read_signal(&cfg.channel)
        .map_err(|e| PipelineError::edf(&pair.psg, e))?;
    let span = psg.span_s();
    let mut hyp_file =
        EdfFile::open(&pair.hypnogram).map_err(|e| PipelineError::edf(&pair.hypnogram, e))?;
    let events = hyp_file
        .read_annotations()
        .map_err(|e| PipelineError::edf(&pair.hypnogram, e))?;
    let hyp = expand_hypnogram(&events, span, pair.hypnogram.display().to_string())
        .map_err(|e| PipelineError::edf(&pair.hypnogram, e))?;

    cfg.filter.validate(trace.fs).map_err(ctx)?;
    let filtered = bandpass_filter(&trace, &cfg.filter).map_err(ctx)?;
    drop(trace);
    let epochs = segment_epochs(&filtered, &hyp, &pair.subject, &pair.night).map_err(ctx)?;
    drop(filtered);
    let segmented = epochs.len();
    let (kept, rejected) = reject_artifacts(epochs, &cfg.artifact);
    let before_trim = kept.len();
    let mut kept = trim_wake_margins(kept, cfg.wake_margin_epochs);
    let trimmed = before_trim - kept.len();
    if !kept.is_empty() {
        let all: Vec<f64> = kept
            .iter()
            .flat_map(|e| e.samples.iter().copied())
            .collect();
        let z = ZScore::fit(&all).map_err(ctx)?;
        for e in kept.iter_mut() {
            z.apply(&mut e.samples);
        }
    }
    let stats = RecordingStats {
        id: id.clone(),
        hypnogram_epochs: hyp.len(),
        segmented,
        artifacts_rejected: rejected,
        wake_trimmed: trimmed,
        kept: kept.len(),
        floored_events: hyp.floored_events,
    };
    log::info!(
        "{id}: {} scored epochs, {rejected} artifacts, {trimmed} trimmed, {} kept",
        segmented,
        kept.len()
    );
    Ok(PreparedRecording {
        pair: pair.clone(),
        epochs: kept,
        stats,
    })
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, PipelineError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        b = b.num_threads(j);
    }
    b.build()
        .map_err(|e| PipelineError::Config(format!("worker pool: {e}")))
}

/// Features for every recording, in discovery order. Recordings are
/// processed on a pool of `cfg.jobs` workers (all cores when unset); each
/// worker holds one recording's epochs at a time.
pub fn prepare_dataset(
    cfg: &PipelineConfig,
    pairs: &[RecordingPair],
) -> Result<(FeatureMatrix, Vec<RecordingStats>), PipelineError> {
    let pool = pool(cfg.jobs)?;
    let parts: Vec<Result<(FeatureMatrix, RecordingStats), PipelineError>> = pool.install(|| {
        pairs
            .par_iter()
            .map(|pair| {
                let rec = prepare_recording(pair, cfg)?;
                let m = if rec.epochs.is_empty() {
                    FeatureMatrix::empty(crate::features::feature_names(&cfg.features))
                } else {
                    assemble_features(&rec.epochs, &cfg.features).map_err(|e| {
                        PipelineError::Feature {
                            context: rec.stats.id.clone(),
                            source: e,
                        }
                    })?
                };
                Ok((m, rec.stats))
            })
            .collect()
    });
    let mut matrix = FeatureMatrix::empty(crate::features::feature_names(&cfg.features));
    let mut stats = Vec::with_capacity(parts.len());
    for part in parts {
        let (m, s) = part?;
        matrix.append(m).map_err(|e| PipelineError::Feature {
            context: s.id.clone(),
            source: e,
        })?;
        stats.push(s);
    }
    Ok((matrix, stats))
}

/// Convenience for callers holding a path rather than a config.
pub fn feature_csv_matrix(path: &Path) -> Result<FeatureMatrix, PipelineError> {
    let f = std::fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
    crate::features::read_feature_csv(std::io::BufReader::new(f)).map_err(|e| {
        PipelineError::Feature {
            context: path.display().to_string(),
            source: e,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::synth::{write_dataset, SynthParams};

    #[test]
    fn unknown_channel_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(
            dir.path(),
            &SynthParams {
                subjects: 1,
                max_epochs: Some(20),
                ..SynthParams::default()
            },
        )
        .unwrap();
        let cfg = PipelineConfig {
            data_dir: Some(dir.path().to_path_buf()),
            channel: "EEG Cz".into(),
            ..PipelineConfig::default()
        };
        let pairs = discover(&cfg).unwrap();
        let err = prepare_recording(&pairs[0], &cfg).unwrap_err();
        assert!(matches!(err, PipelineError::Edf { .. }));
        assert!(err.to_string().contains("SC4001E0-PSG.edf"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn prepared_epochs_are_standardized_and_trimmed() {
        let dir = tempfile::tempdir().unwrap();
        let p = SynthParams {
            subjects: 2,
            cycles: 1,
            artifact_rate: 0.05,
            ..SynthParams::default()
        };
        write_dataset(dir.path(), &p).unwrap();
        let cfg = PipelineConfig {
            data_dir: Some(dir.path().to_path_buf()),
            max_subjects: Some(1),
            wake_margin_epochs: Some(10),
            ..PipelineConfig::default()
        };
        let pairs = discover(&cfg).unwrap();
        assert_eq!(pairs.len(), 1);
        let rec = prepare_recording(&pairs[0], &cfg).unwrap();
        let s = &rec.stats;
        assert_eq!(s.segmented, s.artifacts_rejected + s.wake_trimmed + s.kept);
        assert!(s.artifacts_rejected > 0 && s.wake_trimmed > 0);
        let all: Vec<f64> = rec
            .epochs
            .iter()
            .flat_map(|e| e.samples.iter().copied())
            .collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / all.len() as f64;
        assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);

        let (m, stats) = prepare_dataset(&cfg, &pairs).unwrap();
        assert_eq!(m.n_rows(), stats[0].kept);
        assert_eq!(m.n_cols(), 57);
    }
}
