use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::EdfError;

/// A `*-PSG.edf` file and its matching `*-Hypnogram.edf`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordingPair {
    pub psg: PathBuf,
    pub hypnogram: PathBuf,
    /// Subject key, e.g. `SC400` for `SC4001E0`.
    pub subject: String,
    /// Night digit, e.g. `1` for `SC4001E0`.
    pub night: String,
}

impl RecordingPair {
    pub fn id(&self) -> String {
        format!("{}{}", self.subject, self.night)
    }
}

/// Pair PSG and hypnogram files sharing the same subject/night prefix.
///
/// Sleep-cassette stems look like `SC4ssNEx`: `ss` is the subject, `N` the
/// night, and the final character differs between PSG (`0`) and hypnogram
/// (scorer letter). Results are sorted by subject then night.
pub fn discover_recordings(dir: &Path) -> Result<Vec<RecordingPair>, EdfError> {
    let mut psg = BTreeMap::new();
    let mut hyp = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(stem) = name.strip_suffix("-PSG.edf") {
            psg.insert(pair_key(stem), path.clone());
        } else if let Some(stem) = name.strip_suffix("-Hypnogram.edf") {
            hyp.insert(pair_key(stem), path.clone());
        }
    }
    let mut out = Vec::new();
    for (key, psg_path) in psg {
        let Some(hyp_path) = hyp.remove(&key) else {
            log::warn!("no hypnogram for {}", psg_path.display());
            continue;
        };
        let (subject, night) = split_key(&key);
        out.push(RecordingPair {
            psg: psg_path,
            hypnogram: hyp_path,
            subject,
            night,
        });
    }
    Ok(out)
}

fn pair_key(stem: &str) -> String {
    let mut chars: Vec<char> = stem.chars().collect();
    chars.pop();
    chars.into_iter().collect()
}

fn split_key(key: &str) -> (String, String) {
    // SC4ssNE -> subject SC4ss, night N
    if key.len() >= 6 && key.is_ascii() {
        (key[..5].to_string(), key[5..6].to_string())
    } else {
        (key.to_string(), "1".to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_by_prefix() {
        let dir = tempfile::tempdir().unwrap();
        for name in [
            "SC4001E0-PSG.edf",
            "SC4001EC-Hypnogram.edf",
            "SC4002E0-PSG.edf",
            "SC4002EC-Hypnogram.edf",
            "SC4011E0-PSG.edf",
            "SC4011EH-Hypnogram.edf",
            "SC4021E0-PSG.edf",
            "notes.txt",
        ] {
            std::fs::write(dir.path().join(name), b"").unwrap();
        }
        let pairs = discover_recordings(dir.path()).unwrap();
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[0].subject, "SC400");
        assert_eq!(pairs[0].night, "1");
        assert_eq!(pairs[1].night, "2");
        assert_eq!(pairs[2].subject, "SC401");
        assert!(pairs[2].hypnogram.ends_with("SC4011EH-Hypnogram.edf"));
    }
}
