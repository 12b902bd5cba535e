use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use serde::Serialize;

use super::EdfError;

pub const FIXED_HEADER_BYTES: usize = 256;
pub const SIGNAL_HEADER_BYTES: usize = 256;

/// Label carried by the EDF+ annotation pseudo-signal.
pub const ANNOTATION_LABEL: &str = "EDF Annotations";

/// Fixed-width EDF header, parsed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdfHeader {
    pub version: String,
    pub patient_id: String,
    pub recording_id: String,
    pub start: NaiveDateTime,
    pub header_bytes: usize,
    /// Free text in the 44-byte reserved field ("EDF+C", "EDF+D" or blank).
    pub reserved: String,
    /// `-1` only before the data region has been scanned.
    pub n_records: i64,
    pub record_duration_s: f64,
    pub signals: Vec<SignalSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalSpec {
    pub label: String,
    pub transducer: String,
    pub physical_dim: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
    pub prefiltering: String,
    pub samples_per_record: usize,
    pub reserved: String,
}

impl SignalSpec {
    pub fn is_annotation(&self) -> bool {
        self.label == ANNOTATION_LABEL
    }

    /// Sampling rate in Hz for a given record duration.
    pub fn sample_rate(&self, record_duration_s: f64) -> f64 {
        self.samples_per_record as f64 / record_duration_s
    }

    /// Physical-unit value of one digital sample.
    pub fn calibrate(&self, digital: i16) -> f64 {
        f64::from(i32::from(digital) - self.digital_min) * self.gain() + self.physical_min
    }

    /// Physical units per digital step.
    pub fn gain(&self) -> f64 {
        (self.physical_max - self.physical_min) / f64::from(self.digital_max - self.digital_min)
    }
}

impl EdfHeader {
    pub fn n_signals(&self) -> usize {
        self.signals.len()
    }

    /// Bytes per data record across all signals (2 bytes per sample).
    pub fn record_bytes(&self) -> usize {
        self.signals.iter().map(|s| s.samples_per_record * 2).sum()
    }

    pub fn is_edf_plus(&self) -> bool {
        self.reserved.starts_with("EDF+")
    }

    pub fn signal_index(&self, label: &str) -> Option<usize> {
        self.signals.iter().position(|s| s.label == label)
    }

    /// Parse the fixed header and per-signal block from the start of `bytes`.
    ///
    /// Only the first `256 + 256·ns` bytes are consumed; anything after that
    /// is ignored.
    pub fn parse(bytes: &[u8]) -> Result<Self, EdfError> {
        if bytes.len() < FIXED_HEADER_BYTES {
            return Err(EdfError::TruncatedHeader {
                needed: FIXED_HEADER_BYTES,
                got: bytes.len(),
            });
        }
        let mut cur = FieldCursor::new(bytes);
        let version = cur.text(8, "version")?;
        let patient_id = cur.text(80, "patient id")?;
        let recording_id = cur.text(80, "recording id")?;
        let date = cur.text(8, "start date")?;
        let time = cur.text(8, "start time")?;
        let header_bytes: usize = cur.number(8, "header bytes")?;
        let reserved = cur.text(44, "reserved")?;
        let n_records: i64 = cur.number(8, "number of records")?;
        let record_duration_s: f64 = cur.number(8, "record duration")?;
        let ns: usize = cur.number(4, "number of signals")?;

        let expected = FIXED_HEADER_BYTES + SIGNAL_HEADER_BYTES * ns;
        if header_bytes != expected {
            return Err(EdfError::InconsistentHeaderBytes {
                declared: header_bytes,
                expected,
            });
        }
        if bytes.len() < expected {
            return Err(EdfError::TruncatedHeader {
                needed: expected,
                got: bytes.len(),
            });
        }
        if n_records < -1 {
            return Err(EdfError::InvalidField {
                field: "number of records",
                value: n_records.to_string(),
            });
        }
        if !(record_duration_s >= 0.0) {
            return Err(EdfError::InvalidField {
                field: "record duration",
                value: record_duration_s.to_string(),
            });
        }
        let start = parse_start(&date, &time)?;

        // Per-signal fields are stored column-wise: all labels, then all
        // transducers, and so on.
        let labels = cur.column(ns, 16, "label")?;
        let transducers = cur.column(ns, 80, "transducer")?;
        let dims = cur.column(ns, 8, "physical dimension")?;
        let pmins = cur.column(ns, 8, "physical minimum")?;
        let pmaxs = cur.column(ns, 8, "physical maximum")?;
        let dmins = cur.column(ns, 8, "digital minimum")?;
        let dmaxs = cur.column(ns, 8, "digital maximum")?;
        let prefilters = cur.column(ns, 80, "prefiltering")?;
        let spr = cur.column(ns, 8, "samples per record")?;
        let sig_reserved = cur.column(ns, 32, "signal reserved")?;

        let mut signals = Vec::with_capacity(ns);
        for i in 0..ns {
            let spec = SignalSpec {
                label: labels[i].clone(),
                transducer: transducers[i].clone(),
                physical_dim: dims[i].clone(),
                physical_min: parse_num(&pmins[i], "physical minimum")?,
                physical_max: parse_num(&pmaxs[i], "physical maximum")?,
                digital_min: parse_num(&dmins[i], "digital minimum")?,
                digital_max: parse_num(&dmaxs[i], "digital maximum")?,
                prefiltering: prefilters[i].clone(),
                samples_per_record: parse_num(&spr[i], "samples per record")?,
                reserved: sig_reserved[i].clone(),
            };
            if spec.samples_per_record == 0 {
                return Err(EdfError::InvalidField {
                    field: "samples per record",
                    value: "0".into(),
                });
            }
            signals.push(spec);
        }

        Ok(EdfHeader {
            version,
            patient_id,
            recording_id,
            start,
            header_bytes,
            reserved,
            n_records,
            record_duration_s,
            signals,
        })
    }

    /// Serialize to the fixed-width on-disk form (`256 + 256·ns` bytes).
    pub fn to_bytes(&self) -> Vec<u8> {
        let ns = self.signals.len();
        let mut out = Vec::with_capacity(FIXED_HEADER_BYTES + SIGNAL_HEADER_BYTES * ns);
        put(&mut out, &self.version, 8);
        put(&mut out, &self.patient_id, 80);
        put(&mut out, &self.recording_id, 80);
        put(&mut out, &self.start.format("%d.%m.%y").to_string(), 8);
        put(&mut out, &self.start.format("%H.%M.%S").to_string(), 8);
        put(
            &mut out,
            &(FIXED_HEADER_BYTES + SIGNAL_HEADER_BYTES * ns).to_string(),
            8,
        );
        put(&mut out, &self.reserved, 44);
        put(&mut out, &self.n_records.to_string(), 8);
        put(&mut out, &format_number(self.record_duration_s, 8), 8);
        put(&mut out, &ns.to_string(), 4);

        let column = |out: &mut Vec<u8>, width: usize, f: &dyn Fn(&SignalSpec) -> String| {
            for s in &self.signals {
                put(out, &f(s), width);
            }
        };
        column(&mut out, 16, &|s| s.label.clone());
        column(&mut out, 80, &|s| s.transducer.clone());
        column(&mut out, 8, &|s| s.physical_dim.clone());
        column(&mut out, 8, &|s| format_number(s.physical_min, 8));
        column(&mut out, 8, &|s| format_number(s.physical_max, 8));
        column(&mut out, 8, &|s| s.digital_min.to_string());
        column(&mut out, 8, &|s| s.digital_max.to_string());
        column(&mut out, 80, &|s| s.prefiltering.clone());
        column(&mut out, 8, &|s| s.samples_per_record.to_string());
        column(&mut out, 32, &|s| s.reserved.clone());
        out
    }
}

fn put(out: &mut Vec<u8>, text: &str, width: usize) {
    let bytes = text.as_bytes();
    let n = bytes.len().min(width);
    out.extend_from_slice(&bytes[..n]);
    out.extend(std::iter::repeat(b' ').take(width - n));
}

/// Shortest decimal text for `v` that fits `width` characters.
pub(crate) fn format_number(v: f64, width: usize) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        let s = format!("{}", v as i64);
        if s.len() <= width {
            return s;
        }
    }
    let s = format!("{v}");
    if s.len() <= width {
        return s;
    }
    for prec in (0..width).rev() {
        let s = format!("{v:.prec$}");
        if s.len() <= width {
            return s;
        }
    }
    format!("{}", v.round() as i64)
}

fn parse_start(date: &str, time: &str) -> Result<NaiveDateTime, EdfError> {
    let bad = |field: &'static str, value: &str| EdfError::InvalidField {
        field,
        value: value.to_string(),
    };
    let d: Vec<u32> = date
        .split('.')
        .map(|p| p.parse::<u32>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad("start date", date))?;
    let t: Vec<u32> = time
        .split('.')
        .map(|p| p.parse::<u32>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad("start time", time))?;
    if d.len() != 3 || t.len() != 3 {
        return Err(bad("start date/time", &format!("{date} {time}")));
    }
    // EDF two-digit years clip at 1985.
    let year = if d[2] >= 85 { 1900 + d[2] } else { 2000 + d[2] } as i32;
    let date = NaiveDate::from_ymd_opt(year, d[1], d[0]).ok_or_else(|| bad("start date", date))?;
    let time = NaiveTime::from_hms_opt(t[0], t[1], t[2]).ok_or_else(|| bad("start time", time))?;
    Ok(NaiveDateTime::new(date, time))
}

fn parse_num<T: std::str::FromStr>(text: &str, field: &'static str) -> Result<T, EdfError> {
    text.trim().parse().map_err(|_| EdfError::InvalidField {
        field,
        value: text.to_string(),
    })
}

struct FieldCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> FieldCursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn text(&mut self, width: usize, field: &'static str) -> Result<String, EdfError> {
        let end = self.pos + width;
        if end > self.bytes.len() {
            return Err(EdfError::TruncatedHeader {
                needed: end,
                got: self.bytes.len(),
            });
        }
        let raw = &self.bytes[self.pos..end];
        self.pos = end;
        if let Some(off) = raw.iter().position(|b| !(0x20..=0x7e).contains(b)) {
            return Err(EdfError::NonAsciiField {
                field,
                offset: end - width + off,
            });
        }
        // Safe: printable ASCII only.
        Ok(std::str::from_utf8(raw).unwrap().trim_end().to_string())
    }

    fn number<T: std::str::FromStr>(
        &mut self,
        width: usize,
        field: &'static str,
    ) -> Result<T, EdfError> {
        let t = self.text(width, field)?;
        parse_num(&t, field)
    }

    fn column(
        &mut self,
        ns: usize,
        width: usize,
        field: &'static str,
    ) -> Result<Vec<String>, EdfError> {
        (0..ns).map(|_| self.text(width, field)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-assembled header: 1 signal, 100 records of 30 s.
    pub(crate) fn one_signal_fixture() -> Vec<u8> {
        let mut b = Vec::new();
        let mut f = |s: &str, w: usize| {
            let mut v = s.as_bytes().to_vec();
            v.resize(w, b' ');
            b.extend_from_slice(&v);
        };
        f("0", 8);
        f("X X X X", 80);
        f("Startdate 01-JAN-1990 X X X", 80);
        f("01.01.90", 8);
        f("22.30.00", 8);
        f("512", 8);
        f("", 44);
        f("100", 8);
        f("30", 8);
        f("1", 4);
        f("EEG Fpz-Cz", 16);
        f("Ag-AgCl electrodes", 80);
        f("uV", 8);
        f("-200", 8);
        f("200", 8);
        f("-2048", 8);
        f("2047", 8);
        f("HP:0.5Hz LP:100Hz", 80);
        f("3000", 8);
        f("", 32);
        b
    }

    #[test]
    fn parses_hand_built_header() {
        let bytes = one_signal_fixture();
        assert_eq!(bytes.len(), 512);
        let h = EdfHeader::parse(&bytes).unwrap();
        assert_eq!(h.n_signals(), 1);
        assert_eq!(h.n_records, 100);
        assert_eq!(h.record_duration_s, 30.0);
        assert_eq!(h.header_bytes, 512);
        assert_eq!(h.signals[0].label, "EEG Fpz-Cz");
        assert_eq!(h.signals[0].samples_per_record, 3000);
        assert_eq!(h.signals[0].sample_rate(h.record_duration_s), 100.0);
        assert_eq!(h.start.to_string(), "1990-01-01 22:30:00");
    }

    #[test]
    fn header_round_trips_bytes() {
        let bytes = one_signal_fixture();
        let h = EdfHeader::parse(&bytes).unwrap();
        assert_eq!(h.to_bytes(), bytes);
    }

    #[test]
    fn zero_signal_header_is_legal() {
        let mut bytes = one_signal_fixture()[..256].to_vec();
        bytes[184..192].copy_from_slice(b"256     ");
        bytes[252..256].copy_from_slice(b"0   ");
        let h = EdfHeader::parse(&bytes).unwrap();
        assert!(h.signals.is_empty());
        assert_eq!(h.version, "0");
    }

    #[test]
    fn short_input_is_truncated() {
        let bytes = vec![b' '; 255];
        assert!(matches!(
            EdfHeader::parse(&bytes),
            Err(EdfError::TruncatedHeader {
                needed: 256,
                got: 255
            })
        ));
    }

    #[test]
    fn inconsistent_header_bytes() {
        let mut bytes = one_signal_fixture();
        bytes[184..192].copy_from_slice(b"768     ");
        assert!(matches!(
            EdfHeader::parse(&bytes),
            Err(EdfError::InconsistentHeaderBytes {
                declared: 768,
                expected: 512
            })
        ));
    }

    #[test]
    fn non_ascii_rejected() {
        let mut bytes = one_signal_fixture();
        bytes[10] = 0xc3;
        assert!(matches!(
            EdfHeader::parse(&bytes),
            Err(EdfError::NonAsciiField {
                field: "patient id",
                offset: 10
            })
        ));
    }

    #[test]
    fn number_formatting_fits_width() {
        assert_eq!(format_number(30.0, 8), "30");
        assert_eq!(format_number(-192.0, 8), "-192");
        assert_eq!(format_number(0.5, 8), "0.5");
        assert!(format_number(-123.456789012, 8).len() <= 8);
    }
}
