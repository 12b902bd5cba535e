use std::io::Read;
use std::path::Path;
use std::time::Duration;

use sha2::{Digest, Sha256};

use super::{write_atomic, PipelineError};

/// One line of a fetch manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchEntry {
    pub sha256: String,
    pub url: String,
    /// File name under the output directory.
    pub name: String,
}

/// Parses `<sha256> <url-or-relative-path> [name]` lines (the layout of
/// `sha256sum` output). Relative paths are joined onto `base_url`. Blank
/// lines and `#` comments are skipped.
pub fn parse_fetch_manifest(
    text: &str,
    base_url: Option<&str>,
) -> Result<Vec<FetchEntry>, PipelineError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad =
            |why: &str| PipelineError::Config(format!("fetch manifest line {}: {why}", lineno + 1));
        let mut parts = line.split_whitespace();
        let (Some(sha), Some(target)) = (parts.next(), parts.next()) else {
            return Err(bad("expected '<sha256> <url>'"));
        };
        if sha.len() != 64 || !sha.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(bad("checksum is not 64 hex digits"));
        }
        let target = target.trim_start_matches('*');
        let url = if target.contains("://") {
            target.to_string()
        } else {
            let base = base_url.ok_or_else(|| bad("relative path needs a base URL"))?;
            format!(
                "{}/{}",
                base.trim_end_matches('/'),
                target.trim_start_matches("./")
            )
        };
        let name = match parts.next() {
            Some(n) => n.to_string(),
            None => url.rsplit('/').next().unwrap_or_default().to_string(),
        };
        if name.is_empty() || name.contains("..") || name.contains('/') {
            return Err(bad("cannot derive a plain file name"));
        }
        out.push(FetchEntry {
            sha256: sha.to_ascii_lowercase(),
            url,
            name,
        });
    }
    Ok(out)
}

/// Byte source for downloads; `Err` is a transport failure worth retrying.
pub trait Transport {
    fn get(&self, url: &str) -> Result<Vec<u8>, String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self {
            agent: ureq::AgentBuilder::new()
                .timeout_connect(Duration::from_secs(30))
                .build(),
        }
    }
}

impl Transport for UreqTransport {
    fn get(&self, url: &str) -> Result<Vec<u8>, String> {
        let resp = self.agent.get(url).call().map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        resp.into_reader()
            .read_to_end(&mut buf)
            .map_err(|e| e.to_string())?;
        Ok(buf)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FetchSummary {
    pub downloaded: Vec<String>,
    pub skipped: Vec<String>,
    /// Total transport calls, retries included.
    pub requests: usize,
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Ensure every entry exists under `out_dir` with the listed checksum.
///
/// Valid files are left alone. Otherwise the file is downloaded, retrying
/// transport failures `retries` times with doubling `backoff`; a download
/// with the wrong checksum is fetched once more before giving up. Files only
/// land on disk once verified.
pub fn fetch_manifest(
    entries: &[FetchEntry],
    out_dir: &Path,
    transport: &dyn Transport,
    retries: u32,
    backoff: Duration,
) -> Result<FetchSummary, PipelineError> {
    std::fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(out_dir, e))?;
    let mut summary = FetchSummary::default();
    for e in entries {
        let path = out_dir.join(&e.name);
        if path.exists() && super::sha256_file(&path)? == e.sha256 {
            log::debug!("{} already valid", e.name);
            summary.skipped.push(e.name.clone());
            continue;
        }
        let mut last = String::new();
        let mut ok = false;
        for _ in 0..2 {
            let bytes = download(e, transport, retries, backoff, &mut summary.requests)?;
            last = digest(&bytes);
            if last == e.sha256 {
                write_atomic(&path, &bytes)?;
                ok = true;
                break;
            }
            log::warn!("{}: checksum mismatch, retrying once", e.name);
        }
        if !ok {
            return Err(PipelineError::ChecksumMismatch {
                file: e.name.clone(),
                expected: e.sha256.clone(),
                actual: last,
            });
        }
        log::info!("fetched {}", e.name);
        summary.downloaded.push(e.name.clone());
    }
    Ok(summary)
}

fn download(
    e: &FetchEntry,
    transport: &dyn Transport,
    retries: u32,
    backoff: Duration,
    requests: &mut usize,
) -> Result<Vec<u8>, PipelineError> {
    let mut wait = backoff;
    let mut attempt = 0;
    loop {
        attempt += 1;
        *requests += 1;
        match transport.get(&e.url) {
            Ok(b) => return Ok(b),
            Err(reason) if attempt > retries => {
                return Err(PipelineError::NetworkFailure {
                    url: e.url.clone(),
                    attempts: attempt,
                    reason,
                })
            }
            Err(reason) => {
                log::warn!("{}: {reason}; retrying in {:?}", e.url, wait);
                std::thread::sleep(wait);
                wait *= 2;
            }
        }
    }
}
