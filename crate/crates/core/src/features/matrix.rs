use std::io::{BufRead, BufReader, Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spectral::{band_feature_names, band_power_features, canonical_bands, BandDefinition};
use super::time::{time_domain_features, TIME_FEATURE_NAMES};
use super::wavelet::{
    scalogram_feature_names, scalogram_features, wavelet_band_features, wavelet_feature_names,
};
use super::FeatureError;
use crate::preprocess::EpochRecord;
use crate::wavelet::{dwt_multilevel, CwtPlan, ScaleGrid, WaveletSpec};
use crate::SleepStage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub dwt: bool,
    pub cwt: bool,
    pub dwt_levels: usize,
    pub cwt_scales: usize,
    pub bands: Vec<BandDefinition>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            dwt: true,
            cwt: true,
            dwt_levels: 5,
            cwt_scales: 64,
            bands: canonical_bands(),
        }
    }
}

pub fn feature_names(config: &FeatureConfig) -> Vec<String> {
    let mut names: Vec<String> = TIME_FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    names.extend(band_feature_names(&config.bands));
    if config.dwt {
        names.extend(wavelet_feature_names(config.dwt_levels));
    }
    if config.cwt {
        names.extend(scalogram_feature_names(&config.bands));
    }
    names
}

/// Reusable per-rate state: the CWT plan is built once per epoch length.
pub struct FeatureExtractor {
    config: FeatureConfig,
    fs: f64,
    names: Vec<String>,
    cwt: Option<CwtPlan>,
}

impl FeatureExtractor {
    pub fn new(config: &FeatureConfig, fs: f64, epoch_len: usize) -> Result<Self, FeatureError> {
        for b in &config.bands {
            if b.hi_hz >= fs / 2.0 {
                return Err(FeatureError::BandAboveNyquist { hz: b.hi_hz, fs });
            }
        }
        let cwt = if config.cwt {
            let top = (40.0f64).min(0.45 * fs);
            let grid = ScaleGrid::log_spaced(0.5, top, config.cwt_scales, 6.0, fs)?;
            Some(CwtPlan::new(&grid, epoch_len)?)
        } else {
            None
        };
        Ok(Self {
            config: config.clone(),
            fs,
            names: feature_names(config),
            cwt,
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Raw feature values and whether any block hit its zero-energy sentinel.
    pub fn extract(&self, xs: &[f64]) -> Result<(Vec<f64>, bool), FeatureError> {
        let mut out = Vec::with_capacity(self.names.len());
        let (t, mut degenerate) = time_domain_features(xs);
        out.extend_from_slice(&t);
        let (b, deg) = band_power_features(xs, self.fs, &self.config.bands);
        out.extend(b);
        degenerate |= deg;
        if self.config.dwt {
            let sub = dwt_multilevel(xs, &WaveletSpec::db4(self.config.dwt_levels))?;
            let (w, deg) = wavelet_band_features(&sub);
            out.extend(w);
            degenerate |= deg;
        }
        if let Some(plan) = &self.cwt {
            let s = if plan.signal_len() == xs.len() {
                plan.transform(xs)?
            } else {
                CwtPlan::new(plan.grid(), xs.len())?.transform(xs)?
            };
            out.extend(scalogram_features(&s, &self.config.bands)?);
        }
        Ok((out, degenerate))
    }
}

/// Feature vector of a single epoch, with finiteness checked.
pub fn epoch_features(
    epoch: &EpochRecord,
    ex: &FeatureExtractor,
) -> Result<(Vec<f64>, bool), FeatureError> {
    if epoch.samples.len() < 3 {
        return Err(FeatureError::TooShort {
            epoch: epoch.key(),
            len: epoch.samples.len(),
        });
    }
    let (values, degenerate) = ex.extract(&epoch.samples)?;
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(FeatureError::NonFiniteFeature {
            epoch: epoch.key(),
            column: ex.names[i].clone(),
        });
    }
    Ok((values, degenerate))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowKey {
    pub subject: String,
    pub night: String,
    pub epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub keys: Vec<RowKey>,
    pub stages: Vec<SleepStage>,
    pub degenerate: Vec<bool>,
}

impl FeatureMatrix {
    pub fn empty(names: Vec<String>) -> Self {
        Self {
            names,
            rows: Vec::new(),
            keys: Vec::new(),
            stages: Vec::new(),
            degenerate: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    /// Subject id per row, used as the grouping key for splits.
    pub fn groups(&self) -> impl Iterator<Item = &str> {
        self.keys.iter().map(|k| k.subject.as_str())
    }

    pub fn append(&mut self, mut other: FeatureMatrix) -> Result<(), FeatureError> {
        if other.names != self.names {
            return Err(FeatureError::Csv(
                "column names differ between matrices".into(),
            ));
        }
        self.rows.append(&mut other.rows);
        self.keys.append(&mut other.keys);
        self.stages.append(&mut other.stages);
        self.degenerate.append(&mut other.degenerate);
        Ok(())
    }

    /// Rows whose subject satisfies `keep`, in original order.
    pub fn filter_subjects(&self, keep: impl Fn(&str) -> bool) -> FeatureMatrix {
        let mut out = FeatureMatrix::empty(self.names.clone());
        for i in 0..self.n_rows() {
            if keep(&self.keys[i].subject) {
                out.rows.push(self.rows[i].clone());
                out.keys.push(self.keys[i].clone());
                out.stages.push(self.stages[i]);
                out.degenerate.push(self.degenerate[i]);
            }
        }
        out
    }
}

/// Feature matrix for a batch of epochs sharing one sampling rate. Row
/// order follows input order.
pub fn assemble_features(
    epochs: &[EpochRecord],
    config: &FeatureConfig,
) -> Result<FeatureMatrix, FeatureError> {
    let names = feature_names(config);
    let Some(first) = epochs.first() else {
        return Ok(FeatureMatrix::empty(names));
    };
    if let Some(e) = epochs.iter().find(|e| e.fs != first.fs) {
        return Err(FeatureError::MixedSamplingRate {
            first: first.fs,
            other: e.fs,
        });
    }
    let ex = FeatureExtractor::new(config, first.fs, first.samples.len())?;
    let computed: Vec<_> = epochs.par_iter().map(|e| epoch_features(e, &ex)).collect();
    let mut m = FeatureMatrix::empty(names);
    for (e, r) in epochs.iter().zip(computed) {
        let (values, degenerate) = r?;
        m.rows.push(values);
        m.keys.push(RowKey {
            subject: e.subject.clone(),
            night: e.night.clone(),
            epoch: e.index,
        });
        m.stages.push(e.stage);
        m.degenerate.push(degenerate);
    }
    Ok(m)
}

const KEY_COLUMNS: [&str; 4] = ["subject", "night", "epoch", "stage"];

/// CSV with the key columns followed by one column per feature. Values use
/// the shortest round-trip decimal form, so reading back is exact.
pub fn write_feature_csv<W: Write>(mut w: W, m: &FeatureMatrix) -> Result<(), FeatureError> {
    let header: Vec<&str> = KEY_COLUMNS
        .iter()
        .copied()
        .chain(m.names.iter().map(|s| s.as_str()))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for ((row, key), stage) in m.rows.iter().zip(&m.keys).zip(&m.stages) {
        write!(w, "{},{},{},{}", key.subject, key.night, key.epoch, stage)?;
        for v in row {
            write!(w, ",{v:?}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_feature_csv<R: Read>(r: R) -> Result<FeatureMatrix, FeatureError> {
    let mut lines = BufReader::new(r).lines();
    let header = lines
        .next()
        .ok_or_else(|| FeatureError::Csv("empty file".into()))??;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < KEY_COLUMNS.len() || cols[..4] != KEY_COLUMNS {
        return Err(FeatureError::Csv(format!("unexpected header: {header}")));
    }
    let mut m = FeatureMatrix::empty(cols[4..].iter().map(|s| s.to_string()).collect());
    for (ln, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| FeatureError::Csv(format!("line {}: {what}", ln + 2));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(bad("wrong field count"));
        }
        let epoch = fields[2].parse().map_err(|_| bad("bad epoch index"))?;
        let stage: SleepStage = fields[3].parse().map_err(|_| bad("bad stage"))?;
        let row = fields[4..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| bad("bad number")))
            .collect::<Result<Vec<_>, _>>()?;
        m.rows.push(row);
        m.keys.push(RowKey {
            subject: fields[0].to_string(),
            night: fields[1].to_string(),
            epoch,
        });
        m.stages.push(stage);
        m.degenerate.push(false);
    }
    Ok(m)
}
