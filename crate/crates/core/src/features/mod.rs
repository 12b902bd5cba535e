mod matrix;
mod spectral;
mod time;
mod wavelet;

pub use matrix::{
    assemble_features, epoch_features, feature_names, read_feature_csv, write_feature_csv,
    FeatureConfig, FeatureExtractor, FeatureMatrix, RowKey,
};
pub use spectral::{
    band_feature_names, band_power_features, band_powers, canonical_bands, welch_psd,
    BandDefinition,
};
pub use time::{time_domain_features, TIME_FEATURE_NAMES};
pub use wavelet::{
    scalogram_feature_names, scalogram_features, wavelet_band_features, wavelet_feature_names,
    SCALOGRAM_EDGE_FRACTION,
};

use crate::wavelet::WaveletError;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("band {band} has no rows in the scalogram grid")]
    BandOutsideGrid { band: String },
    #[error("non-finite value in column {column} for epoch {epoch}")]
    NonFiniteFeature { epoch: String, column: String },
    #[error("epochs mix sampling rates ({first} Hz vs {other} Hz)")]
    MixedSamplingRate { first: f64, other: f64 },
    #[error("epoch {epoch} has {len} samples, need at least 3")]
    TooShort { epoch: String, len: usize },
    #[error("band edge {hz} Hz is at or above Nyquist for fs = {fs} Hz")]
    BandAboveNyquist { hz: f64, fs: f64 },
    #[error("feature csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Wavelet(#[from] WaveletError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
