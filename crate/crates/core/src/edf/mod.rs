//! EDF/EDF+ reading for Sleep-EDF PSG and hypnogram files.
//!
//! The reader is deliberately narrow: 16-bit little-endian samples, a fixed
//! ASCII header, and EDF+ time-stamped annotation lists (TALs) for the
//! hypnogram side.

mod annotations;
mod discover;
mod header;
mod hypnogram;
mod reader;
mod writer;

pub use annotations::{parse_tal_block, AnnotationEvent};
pub use discover::{discover_recordings, RecordingPair};
pub use header::{
    EdfHeader, SignalSpec, ANNOTATION_LABEL, FIXED_HEADER_BYTES, SIGNAL_HEADER_BYTES,
};
pub use hypnogram::{expand_hypnogram, stage_from_label, Hypnogram, EPOCH_SECONDS};
pub use reader::{EdfFile, SignalTrace};
pub use writer::{EdfWriter, WriterSignal};

#[derive(Debug, thiserror::Error)]
pub enum EdfError {
    #[error("header truncated: need {needed} bytes, have {got}")]
    TruncatedHeader { needed: usize, got: usize },
    #[error("non-ASCII byte in header field '{field}' at offset {offset}")]
    NonAsciiField { field: &'static str, offset: usize },
    #[error("header declares {declared} bytes but signal count implies {expected}")]
    InconsistentHeaderBytes { declared: usize, expected: usize },
    #[error("invalid header field '{field}': {value:?}")]
    InvalidField { field: &'static str, value: String },
    #[error("channel {channel:?} not present (available: {available})")]
    UnknownChannel { channel: String, available: String },
    #[error("data record {record} is truncated")]
    TruncatedRecord { record: usize },
    #[error(
        "channel {channel:?} has degenerate calibration (digital min = max or physical min = max)"
    )]
    DegenerateCalibration { channel: String },
    #[error("malformed TAL at byte {offset}: {reason}")]
    MalformedTal { offset: usize, reason: String },
    #[error("file has no 'EDF Annotations' signal")]
    NoAnnotationSignal,
    #[error("unknown stage label {0:?}")]
    UnknownStageLabel(String),
    #[error("annotation at {onset_s} s overlaps the previous event ending at {previous_end_s} s")]
    OverlappingEvents { onset_s: f64, previous_end_s: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
