//! Minimal EDF+ writer used for fixtures and synthetic recordings.

use std::io::Write;
use std::path::Path;

use chrono::NaiveDateTime;

use super::header::{EdfHeader, SignalSpec, ANNOTATION_LABEL};
use super::{AnnotationEvent, EdfError};

#[derive(Debug, Clone)]
pub struct WriterSignal {
    pub label: String,
    pub physical_dim: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
    pub samples_per_record: usize,
}

impl WriterSignal {
    /// 16-bit EEG channel with a symmetric physical range.
    pub fn eeg(label: &str, range_uv: f64, samples_per_record: usize) -> Self {
        Self {
            label: label.to_string(),
            physical_dim: "uV".into(),
            physical_min: -range_uv,
            physical_max: range_uv,
            digital_min: -32768,
            digital_max: 32767,
            samples_per_record,
        }
    }

    fn spec(&self) -> SignalSpec {
        SignalSpec {
            label: self.label.clone(),
            transducer: String::new(),
            physical_dim: self.physical_dim.clone(),
            physical_min: self.physical_min,
            physical_max: self.physical_max,
            digital_min: self.digital_min,
            digital_max: self.digital_max,
            prefiltering: String::new(),
            samples_per_record: self.samples_per_record,
            reserved: String::new(),
        }
    }

    fn quantize(&self, v: f64) -> i16 {
        let gain = (self.physical_max - self.physical_min)
            / f64::from(self.digital_max - self.digital_min);
        let d = ((v - self.physical_min) / gain).round() + f64::from(self.digital_min);
        d.clamp(f64::from(self.digital_min), f64::from(self.digital_max)) as i16
    }
}

pub struct EdfWriter {
    patient_id: String,
    recording_id: String,
    start: NaiveDateTime,
    signals: Vec<WriterSignal>,
}

impl EdfWriter {
    pub fn new(patient_id: &str, recording_id: &str) -> Self {
        Self {
            patient_id: patient_id.to_string(),
            recording_id: recording_id.to_string(),
            start: chrono::NaiveDate::from_ymd_opt(1989, 4, 24)
                .unwrap()
                .and_hms_opt(16, 13, 0)
                .unwrap(),
            signals: Vec::new(),
        }
    }

    pub fn start(mut self, start: NaiveDateTime) -> Self {
        self.start = start;
        self
    }

    pub fn add_signal(&mut self, signal: WriterSignal) -> &mut Self {
        self.signals.push(signal);
        self
    }

    fn header(&self, n_records: i64, record_duration_s: f64, reserved: &str) -> EdfHeader {
        EdfHeader {
            version: "0".into(),
            patient_id: self.patient_id.clone(),
            recording_id: self.recording_id.clone(),
            start: self.start,
            header_bytes: 256 + 256 * self.signals.len(),
            reserved: reserved.into(),
            n_records,
            record_duration_s,
            signals: self.signals.iter().map(WriterSignal::spec).collect(),
        }
    }

    /// Encode digital samples; every channel must hold the same whole number
    /// of records.
    pub fn to_bytes_digital(
        &self,
        record_duration_s: f64,
        data: &[Vec<i16>],
    ) -> Result<Vec<u8>, EdfError> {
        if data.len() != self.signals.len() {
            return Err(EdfError::InvalidField {
                field: "signal count",
                value: data.len().to_string(),
            });
        }
        let mut n_records = None;
        for (sig, samples) in self.signals.iter().zip(data) {
            let spr = sig.samples_per_record;
            if samples.len() % spr != 0 {
                return Err(EdfError::InvalidField {
                    field: "samples",
                    value: format!("{} samples for {} per record", samples.len(), spr),
                });
            }
            let n = samples.len() / spr;
            if *n_records.get_or_insert(n) != n {
                return Err(EdfError::InvalidField {
                    field: "samples",
                    value: format!("channel {} has {n} records", sig.label),
                });
            }
        }
        let n_records = n_records.unwrap_or(0);
        let mut out = self
            .header(n_records as i64, record_duration_s, "")
            .to_bytes();
        for rec in 0..n_records {
            for (sig, samples) in self.signals.iter().zip(data) {
                let spr = sig.samples_per_record;
                for &d in &samples[rec * spr..(rec + 1) * spr] {
                    out.extend_from_slice(&d.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn to_bytes_physical(
        &self,
        record_duration_s: f64,
        data: &[Vec<f64>],
    ) -> Result<Vec<u8>, EdfError> {
        let digital: Vec<Vec<i16>> = self
            .signals
            .iter()
            .zip(data)
            .map(|(sig, xs)| xs.iter().map(|&v| sig.quantize(v)).collect())
            .collect();
        self.to_bytes_digital(record_duration_s, &digital)
    }

    pub fn write_physical(
        &self,
        path: &Path,
        record_duration_s: f64,
        data: &[Vec<f64>],
    ) -> Result<(), EdfError> {
        let bytes = self.to_bytes_physical(record_duration_s, data)?;
        std::fs::File::create(path)?.write_all(&bytes)?;
        Ok(())
    }

    /// EDF+ file with a single annotation signal holding all events in one
    /// data record, preceded by the timekeeping TAL.
    pub fn annotation_bytes(&self, events: &[AnnotationEvent]) -> Vec<u8> {
        let mut tals: Vec<u8> = b"+0\x14\x14\x00".to_vec();
        for ev in events {
            tals.extend_from_slice(
                format!(
                    "+{}\x15{}\x14{}\x14\x00",
                    fmt_time(ev.onset_s),
                    fmt_time(ev.duration_s),
                    ev.label
                )
                .as_bytes(),
            );
        }
        if tals.len() % 2 == 1 {
            tals.push(0);
        }
        let spr = tals.len() / 2;
        let writer = EdfWriter {
            patient_id: self.patient_id.clone(),
            recording_id: self.recording_id.clone(),
            start: self.start,
            signals: vec![WriterSignal {
                label: ANNOTATION_LABEL.into(),
                physical_dim: String::new(),
                physical_min: -1.0,
                physical_max: 1.0,
                digital_min: -32768,
                digital_max: 32767,
                samples_per_record: spr,
            }],
        };
        let mut out = writer.header(1, 0.0, "EDF+C").to_bytes();
        out.extend_from_slice(&tals);
        out
    }
}

fn fmt_time(t: f64) -> String {
    if t.fract() == 0.0 {
        format!("{}", t as i64)
    } else {
        format!("{t}")
    }
}
