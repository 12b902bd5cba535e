//! Discrete (db4, periodic) and continuous (complex Morlet) wavelet
//! transforms.

mod cwt;
mod dwt;
mod export;

pub use cwt::{cwt_scalogram, scale_frequency_map, CwtPlan, ScaleGrid, Scalogram};
pub use dwt::{
    dwt_multilevel, idwt_multilevel, Boundary, SubbandSet, WaveletFamily, WaveletSpec, DB4_LOWPASS,
};
pub use export::{parse_pgm, scalogram_pgm, write_scalogram_csv};

#[derive(Debug, thiserror::Error)]
pub enum WaveletError {
    #[error("signal of length {len} too short for {levels} decomposition levels")]
    TooShortForLevels { len: usize, levels: usize },
    #[error("only 8-tap Daubechies (db4) is supported, got {taps} taps")]
    UnsupportedWavelet { taps: usize },
    #[error("invalid level count {0}")]
    InvalidLevels(usize),
    #[error("inconsistent subbands: {0}")]
    InconsistentSubbands(String),
    #[error("scale grid is empty")]
    EmptyScaleGrid,
    #[error("invalid scale grid: {0}")]
    InvalidGrid(String),
    #[error("empty signal")]
    EmptySignal,
    #[error("signal length {got} does not match plan length {expected}")]
    LengthMismatch { expected: usize, got: usize },
}
