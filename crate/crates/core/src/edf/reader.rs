use std::fs::File;
use std::io::{BufReader, Read, Seek, SeekFrom};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::annotations::{parse_tal_block, AnnotationEvent};
use super::header::{EdfHeader, FIXED_HEADER_BYTES, SIGNAL_HEADER_BYTES};
use super::EdfError;

/// Calibrated samples of one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalTrace {
    pub label: String,
    pub fs: f64,
    pub samples: Vec<f64>,
}

impl SignalTrace {
    pub fn new(label: impl Into<String>, fs: f64, samples: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            fs,
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }
}

/// An open EDF file with its header resolved.
///
/// `n_records == -1` in the header is replaced by the count implied by the
/// file size when the file is opened.
pub struct EdfFile<R> {
    source: R,
    header: EdfHeader,
}

impl EdfFile<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, EdfError> {
        let file = File::open(path)?;
        Self::from_reader(BufReader::new(file))
    }
}

impl<R: Read + Seek> EdfFile<R> {
    pub fn from_reader(mut source: R) -> Result<Self, EdfError> {
        source.seek(SeekFrom::Start(0))?;
        let mut fixed = vec![0u8; FIXED_HEADER_BYTES];
        let got = read_up_to(&mut source, &mut fixed)?;
        if got < FIXED_HEADER_BYTES {
            return Err(EdfError::TruncatedHeader {
                needed: FIXED_HEADER_BYTES,
                got,
            });
        }
        let ns: usize = std::str::from_utf8(&fixed[252..256])
            .ok()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| EdfError::InvalidField {
                field: "number of signals",
                value: String::from_utf8_lossy(&fixed[252..256]).into_owned(),
            })?;
        let mut full = fixed;
        full.resize(FIXED_HEADER_BYTES + SIGNAL_HEADER_BYTES * ns, 0);
        let got = read_up_to(&mut source, &mut full[FIXED_HEADER_BYTES..])?;
        full.truncate(FIXED_HEADER_BYTES + got);
        let mut header = EdfHeader::parse(&full)?;

        let file_len = source.seek(SeekFrom::End(0))?;
        let data_len = file_len.saturating_sub(header.header_bytes as u64);
        let record_bytes = header.record_bytes() as u64;
        if header.n_records < 0 {
            let n = if record_bytes == 0 {
                0
            } else {
                data_len / record_bytes
            };
            log::debug!("resolved unknown record count to {n} from file size");
            header.n_records = n as i64;
        }
        Ok(Self { source, header })
    }

    pub fn header(&self) -> &EdfHeader {
        &self.header
    }

    pub fn into_header(self) -> EdfHeader {
        self.header
    }

    /// Total recording span in seconds.
    pub fn span_s(&self) -> f64 {
        self.header.n_records.max(0) as f64 * self.header.record_duration_s
    }

    fn record_offset(&self, record: usize) -> u64 {
        self.header.header_bytes as u64 + (record * self.header.record_bytes()) as u64
    }

    fn signal_byte_offset(&self, index: usize) -> usize {
        self.header.signals[..index]
            .iter()
            .map(|s| s.samples_per_record * 2)
            .sum()
    }

    /// Raw digital samples of one signal across all records.
    pub fn read_digital(&mut self, index: usize) -> Result<Vec<i16>, EdfError> {
        let spec = &self.header.signals[index];
        let spr = spec.samples_per_record;
        let n_records = self.header.n_records.max(0) as usize;
        let within = self.signal_byte_offset(index) as u64;
        let mut out = Vec::with_capacity(n_records * spr);
        let mut buf = vec![0u8; spr * 2];
        for rec in 0..n_records {
            self.source
                .seek(SeekFrom::Start(self.record_offset(rec) + within))?;
            if read_up_to(&mut self.source, &mut buf)? < buf.len() {
                return Err(EdfError::TruncatedRecord { record: rec });
            }
            out.extend(
                buf.chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]])),
            );
        }
        Ok(out)
    }

    /// Read one channel by label and convert to physical units.
    pub fn read_signal(&mut self, channel: &str) -> Result<SignalTrace, EdfError> {
        let index = self
            .header
            .signal_index(channel)
            .ok_or_else(|| EdfError::UnknownChannel {
                channel: channel.to_string(),
                available: self
                    .header
                    .signals
                    .iter()
                    .map(|s| s.label.as_str())
                    .collect::<Vec<_>>()
                    .join(", "),
            })?;
        let spec = self.header.signals[index].clone();
        if spec.digital_min == spec.digital_max || spec.physical_min == spec.physical_max {
            return Err(EdfError::DegenerateCalibration {
                channel: channel.to_string(),
            });
        }
        if !(self.header.record_duration_s > 0.0) {
            return Err(EdfError::InvalidField {
                field: "record duration",
                value: self.header.record_duration_s.to_string(),
            });
        }
        let digital = self.read_digital(index)?;
        let samples = digital.into_iter().map(|d| spec.calibrate(d)).collect();
        Ok(SignalTrace {
            label: spec.label.clone(),
            fs: spec.sample_rate(self.header.record_duration_s),
            samples,
        })
    }

    /// Decode every TAL in every "EDF Annotations" signal, in file order.
    pub fn read_annotations(&mut self) -> Result<Vec<AnnotationEvent>, EdfError> {
        let indices: Vec<usize> = self
            .header
            .signals
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_annotation())
            .map(|(i, _)| i)
            .collect();
        if indices.is_empty() {
            return Err(EdfError::NoAnnotationSignal);
        }
        let n_records = self.header.n_records.max(0) as usize;
        let mut events = Vec::new();
        for rec in 0..n_records {
            for &index in &indices {
                let spr = self.header.signals[index].samples_per_record;
                let within = self.signal_byte_offset(index) as u64;
                let start = self.record_offset(rec) + within;
                self.source.seek(SeekFrom::Start(start))?;
                let mut buf = vec![0u8; spr * 2];
                if read_up_to(&mut self.source, &mut buf)? < buf.len() {
                    return Err(EdfError::TruncatedRecord { record: rec });
                }
                let block = parse_tal_block(&buf).map_err(|e| match e {
                    EdfError::MalformedTal { offset, reason } => EdfError::MalformedTal {
                        offset: start as usize + offset,
                        reason,
                    },
                    other => other,
                })?;
                events.extend(block);
            }
        }
        Ok(events)
    }
}

fn read_up_to<R: Read>(r: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}
