//! Model bundle container.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic     8 bytes  "SOMNMDL1"
//! version   u32
//! sections  u32
//! repeated: name_len u16, name (UTF-8), payload_len u64, payload (JSON)
//! sha256    32 bytes over everything above
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EnsembleModel, ModelError};
use crate::select::{PcaModel, SelectionModel};

pub const BUNDLE_MAGIC: &[u8; 8] = b"SOMNMDL1";
pub const BUNDLE_VERSION: u32 = 1;

pub fn write_sections(sections: &[(&str, Vec<u8>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(BUNDLE_MAGIC);
    out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
    out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
    for (name, payload) in sections {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(payload);
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| {
            ModelError::MalformedBundle(format!("truncated at byte {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_sections(bytes: &[u8]) -> Result<Vec<(String, Vec<u8>)>, ModelError> {
    if bytes.len() < 8 || &bytes[..8] != BUNDLE_MAGIC {
        return Err(ModelError::BadMagic);
    }
    if bytes.len() < 16 + 32 {
        return Err(ModelError::MalformedBundle(
            "shorter than header and trailer".into(),
        ));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != BUNDLE_VERSION {
        return Err(ModelError::BundleVersionMismatch {
            found: version,
            expected: BUNDLE_VERSION,
        });
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != trailer {
        return Err(ModelError::ChecksumMismatch);
    }
    let mut c = Cursor { buf: body, pos: 12 };
    let count = c.u32()?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = c.u16()? as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| ModelError::MalformedBundle("section name is not UTF-8".into()))?
            .to_string();
        let plen = c.u64()? as usize;
        out.push((name, c.take(plen)?.to_vec()));
    }
    if c.pos != body.len() {
        return Err(ModelError::MalformedBundle(
            "trailing bytes after last section".into(),
        ));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub software_version: String,
    pub feature_names: Vec<String>,
}

/// Everything needed to score a new recording.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub meta: BundleMeta,
    /// Pipeline configuration as TOML text.
    pub config: String,
    pub selection: SelectionModel,
    pub pca: Option<PcaModel>,
    pub ensemble: EnsembleModel,
}

impl ModelBundle {
    pub fn to_bytes(&self) -> Result<Vec<u8>, ModelError> {
        let mut sections = vec![
            ("meta", serde_json::to_vec(&self.meta)?),
            ("config", self.config.as_bytes().to_vec()),
            ("selection", serde_json::to_vec(&self.selection)?),
            ("ensemble", serde_json::to_vec(&self.ensemble)?),
        ];
        if let Some(p) = &self.pca {
            sections.push(("pca", serde_json::to_vec(p)?));
        }
        Ok(write_sections(&sections))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let sections = read_sections(bytes)?;
        let get = |name: &str| {
            sections
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, p)| p.as_slice())
                .ok_or_else(|| ModelError::MissingSection(name.into()))
        };
        Ok(Self {
            meta: serde_json::from_slice(get("meta")?)?,
            config: String::from_utf8(get("config")?.to_vec())
                .map_err(|_| ModelError::MalformedBundle("config is not UTF-8".into()))?,
            selection: serde_json::from_slice(get("selection")?)?,
            ensemble: serde_json::from_slice(get("ensemble")?)?,
            pca: match get("pca") {
                Ok(p) => Some(serde_json::from_slice(p)?),
                Err(_) => None,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
