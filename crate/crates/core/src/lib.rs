pub mod edf;
pub mod eval;
pub mod features;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod select;
pub mod stage;
pub mod wavelet;

pub use stage::SleepStage;
