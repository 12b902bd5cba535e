//! Binary epoch cache.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "SOMN1"            5 bytes magic
//! u32                epoch count
//! per epoch:
//!   u16 + bytes      subject id (UTF-8)
//!   u16 + bytes      night id (UTF-8)
//!   u32              epoch index within the night
//!   u8               stage code (W=0 N1=1 N2=2 N3=3 REM=4 Excluded=5)
//!   f32              sampling rate (Hz)
//!   u32              sample count n
//!   n × f32          samples
//! ```
//!
//! A CSV index (`subject,night,epoch,stage,offset`) accompanies the binary
//! file; `offset` is the byte position of the epoch's header.

use std::io::{Read, Write};

use super::{EpochRecord, PreprocessError};
use crate::stage::SleepStage;

pub const CACHE_MAGIC: &[u8; 5] = b"SOMN1";

/// Serialize epochs; returns the bytes and the CSV index text.
pub fn encode_epochs(epochs: &[EpochRecord]) -> (Vec<u8>, String) {
    let mut out = Vec::new();
    let mut index = String::from("subject,night,epoch,stage,offset\n");
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&(epochs.len() as u32).to_le_bytes());
    for e in epochs {
        index.push_str(&format!(
            "{},{},{},{},{}\n",
            e.subject,
            e.night,
            e.index,
            e.stage,
            out.len()
        ));
        put_str(&mut out, &e.subject);
        put_str(&mut out, &e.night);
        out.extend_from_slice(&(e.index as u32).to_le_bytes());
        out.push(e.stage.code());
        out.extend_from_slice(&(e.fs as f32).to_le_bytes());
        out.extend_from_slice(&(e.samples.len() as u32).to_le_bytes());
        for &v in &e.samples {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    (out, index)
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    let b = s.as_bytes();
    out.extend_from_slice(&(b.len() as u16).to_le_bytes());
    out.extend_from_slice(b);
}

pub fn write_epochs<W: Write>(mut w: W, epochs: &[EpochRecord]) -> Result<String, PreprocessError> {
    let (bytes, index) = encode_epochs(epochs);
    w.write_all(&bytes)?;
    Ok(index)
}

pub fn read_epochs<R: Read>(mut r: R) -> Result<Vec<EpochRecord>, PreprocessError> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(PreprocessError::BadCache("magic mismatch".into()));
    }
    let count = read_u32(&mut r)? as usize;
    let mut epochs = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let subject = read_str(&mut r)?;
        let night = read_str(&mut r)?;
        let index = read_u32(&mut r)? as usize;
        let mut code = [0u8; 1];
        r.read_exact(&mut code)?;
        let stage = SleepStage::from_code(code[0])
            .ok_or_else(|| PreprocessError::BadCache(format!("stage code {}", code[0])))?;
        let mut f = [0u8; 4];
        r.read_exact(&mut f)?;
        let fs = f64::from(f32::from_le_bytes(f));
        let n = read_u32(&mut r)? as usize;
        let mut raw = vec![0u8; n * 4];
        r.read_exact(&mut raw)?;
        let samples = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        epochs.push(EpochRecord::new(
            &subject, &night, index, stage, fs, samples,
        ));
    }
    Ok(epochs)
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> Result<String, PreprocessError> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    let mut s = vec![0u8; u16::from_le_bytes(b) as usize];
    r.read_exact(&mut s)?;
    String::from_utf8(s).map_err(|e| PreprocessError::BadCache(e.to_string()))
}
