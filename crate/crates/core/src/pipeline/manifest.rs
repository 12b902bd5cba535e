use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;

/// Write via a sibling temporary file and rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = std::fs::remove_file(&tmp);
        return Err(PipelineError::io(path, e));
    }
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let mut f = std::fs::File::open(path).map_err(|e| PipelineError::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| PipelineError::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software_version: String,
    pub command: String,
    pub config: String,
    /// Input file name → SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Stage name → wall seconds, in execution order.
    pub timings: Vec<(String, f64)>,
    pub outputs: Vec<OutputRecord>,
}

impl RunManifest {
    pub fn new(command: &str, config: String) -> Self {
        Self {
            software_version: super::SOFTWARE_VERSION.to_string(),
            command: command.to_string(),
            config,
            inputs: BTreeMap::new(),
            timings: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), PipelineError> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        self.inputs.insert(name, sha256_file(path)?);
        Ok(())
    }

    /// Writes `bytes` atomically to `dir/name` and records it.
    pub fn write_output(
        &mut self,
        dir: &Path,
        name: &str,
        bytes: &[u8],
    ) -> Result<(), PipelineError> {
        write_atomic(&dir.join(name), bytes)?;
        self.outputs.retain(|o| o.path != name);
        self.outputs.push(OutputRecord {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = std::time::Instant::now();
        let out = f();
        self.timings
            .push((stage.to_string(), start.elapsed().as_secs_f64()));
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let json = serde_json::to_vec_pretty(self).map_err(|e| PipelineError::Json {
            context: "manifest".into(),
            source: e,
        })?;
        write_atomic(path, &json)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| PipelineError::Json {
            context: path.display().to_string(),
            source: e,
        })
    }

    /// Recompute every output checksum; returns the paths that no longer match.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>, PipelineError> {
        let mut bad = Vec::new();
        for o in &self.outputs {
            if sha256_file(&dir.join(&o.path))? != o.sha256 {
                bad.push(o.path.clone());
            }
        }
        Ok(bad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outputs_verify_and_detect_edits() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new("test", String::new());
        m.write_output(dir.path(), "a.txt", b"hello").unwrap();
        m.write_output(dir.path(), "a.txt", b"hello again").unwrap();
        assert_eq!(m.outputs.len(), 1);
        m.save(&dir.path().join("manifest.json")).unwrap();
        let back = RunManifest::load(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(back, m);
        assert!(back.verify(dir.path()).unwrap().is_empty());
        std::fs::write(dir.path().join("a.txt"), b"tampered").unwrap();
        assert_eq!(back.verify(dir.path()).unwrap(), vec!["a.txt".to_string()]);
        // no temporary files left behind
        let names: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names.len(), 2);
    }
}
