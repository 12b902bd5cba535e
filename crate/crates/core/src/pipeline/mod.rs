//! End-to-end orchestration behind the `somn` binary: configuration, dataset
//! preparation, cross-validated training, scoring, comparison, downloads and
//! run manifests.

mod compare;
mod config;
mod fetch;
mod manifest;
mod prepare;
mod run;
mod score;
pub mod synth;

pub use compare::{compare_reports, CompareMetric, Comparison, ALPHA};
pub use config::{
    MemberConfig, ModelConfig, PipelineConfig, SelectionConfig, SplitConfig, SplitMode,
    CONFIG_SCHEMA, DATA_DIR_ENV,
};
pub use fetch::{
    fetch_manifest, parse_fetch_manifest, FetchEntry, FetchSummary, Transport, UreqTransport,
};
pub use manifest::{sha256_file, write_atomic, OutputRecord, RunManifest};
pub use prepare::{
    discover, feature_csv_matrix, prepare_dataset, prepare_recording, PreparedRecording,
    RecordingStats,
};
pub use run::{
    run_pipeline, DatasetSummary, FoldInfo, ModelSummary, RunOutcome, RunReport, MODEL_NAMES,
    REFERENCE_ACC, REFERENCE_MF1,
};
pub use score::{hypnogram_svg, score_recording, write_score_csv, ScoredEpoch, STAGE_AXIS};

use std::path::{Path, PathBuf};

use crate::edf::EdfError;
use crate::eval::EvalError;
use crate::features::FeatureError;
use crate::model::ModelError;
use crate::preprocess::PreprocessError;
use crate::select::SelectError;

pub const SOFTWARE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Edf {
        path: PathBuf,
        #[source]
        source: EdfError,
    },
    #[error("{context}: {source}")]
    Preprocess {
        context: String,
        #[source]
        source: PreprocessError,
    },
    #[error("{context}: {source}")]
    Feature {
        context: String,
        #[source]
        source: FeatureError,
    },
    #[error("{context}: {source}")]
    Select {
        context: String,
        #[source]
        source: SelectError,
    },
    #[error("{context}: {source}")]
    Model {
        context: String,
        #[source]
        source: ModelError,
    },
    #[error("{context}: {source}")]
    Eval {
        context: String,
        #[source]
        source: EvalError,
    },
    #[error("{file}: checksum mismatch (expected {expected}, got {actual})")]
    ChecksumMismatch {
        file: String,
        expected: String,
        actual: String,
    },
    #[error("{url}: network failure after {attempts} attempts: {reason}")]
    NetworkFailure {
        url: String,
        attempts: u32,
        reason: String,
    },
    #[error("fold ids differ: {left:?} vs {right:?}")]
    FoldMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("no PSG/hypnogram pairs found in {}", .0.display())]
    NoRecordings(PathBuf),
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn edf(path: &Path, source: EdfError) -> Self {
        Self::Edf {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn model(context: impl Into<String>, source: ModelError) -> Self {
        Self::Model {
            context: context.into(),
            source,
        }
    }

    /// 1 usage/config, 2 data, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Usage(_) => 1,
            Self::Io { .. }
            | Self::Edf { .. }
            | Self::Preprocess { .. }
            | Self::Feature { .. }
            | Self::ChecksumMismatch { .. }
            | Self::NetworkFailure { .. }
            | Self::FoldMismatch { .. }
            | Self::NoRecordings(_)
            | Self::Json { .. } => 2,
            Self::Model { source, .. } => match source {
                ModelError::BadMagic
                | ModelError::BundleVersionMismatch { .. }
                | ModelError::ChecksumMismatch
                | ModelError::MalformedBundle(_)
                | ModelError::MissingSection(_)
                | ModelError::Json(_)
                | ModelError::Io(_)
                | ModelError::DimensionMismatch { .. }
                | ModelError::NonFiniteInput { .. } => 2,
                ModelError::InvalidHyperparameter { .. } => 1,
                _ => 3,
            },
            Self::Select { source, .. } => match source {
                SelectError::DegenerateLabels
                | SelectError::TooFewRows { .. }
                | SelectError::RankZero => 2,
                SelectError::Io(_) => 2,
                _ => 3,
            },
            Self::Eval { source, .. } => match source {
                EvalError::TooFewSubjects(_)
                | EvalError::KTooLarge { .. }
                | EvalError::EmptyInput => 2,
                EvalError::InvalidRatios(_) => 1,
                _ => 3,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(PipelineError::Config("x".into()).exit_code(), 1);
        assert_eq!(PipelineError::NoRecordings("d".into()).exit_code(), 2);
        assert_eq!(
            PipelineError::model("fold 0", ModelError::InvalidEnsemble).exit_code(),
            3
        );
        let e = PipelineError::edf(
            Path::new("a.edf"),
            EdfError::UnknownChannel {
                channel: "X".into(),
                available: "Y".into(),
            },
        );
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("a.edf"));
    }
}
