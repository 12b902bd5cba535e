//! Band-pass filtering, normalization and 30 s epoching of one EEG channel.

mod cache;
mod epochs;
mod filter;

pub use cache::{encode_epochs, read_epochs, write_epochs, CACHE_MAGIC};
pub use epochs::{
    reject_artifacts, segment_epochs, trim_wake_margins, zscore_normalize, ArtifactPolicy,
    EpochRecord, ZScore,
};
pub use filter::{bandpass_filter, Biquad, FilterDesign, FilterSpec, SosFilter};

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error("band {low_hz}-{high_hz} Hz invalid at fs = {fs} Hz")]
    InvalidBand { low_hz: f64, high_hz: f64, fs: f64 },
    #[error("signal of {len} samples too short for filtering (need at least {needed})")]
    TooShort { len: usize, needed: usize },
    #[error("recording has zero variance")]
    ZeroVariance,
    #[error("empty recording")]
    Empty,
    #[error("sampling rate {fs} Hz does not give a whole number of samples per 30 s epoch")]
    SamplingMismatch { fs: f64 },
    #[error("invalid artifact policy: {0}")]
    InvalidPolicy(String),
    #[error("bad epoch cache: {0}")]
    BadCache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
