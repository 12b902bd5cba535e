use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::features::FeatureConfig;
use crate::model::{ClassWeighting, ClassifierKind, ClassifierSpec, Hyperparameters};
use crate::preprocess::{ArtifactPolicy, FilterSpec};
use crate::select::RfecvParams;

pub const CONFIG_SCHEMA: u32 = 1;
pub const DATA_DIR_ENV: &str = "SOMN_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Holdout,
    Kfold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub mode: SplitMode,
    pub k: usize,
    pub ratios: (f64, f64, f64),
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            mode: SplitMode::Kfold,
            k: 5,
            ratios: (0.70, 0.15, 0.15),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    pub rfecv: bool,
    pub inner_folds: usize,
    pub forest: RfecvParams,
    pub pca: bool,
    pub pca_variance: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            rfecv: true,
            inner_folds: 3,
            forest: RfecvParams {
                n_trees: 25,
                max_depth: Some(10),
                max_rows: 2000,
                ..RfecvParams::default()
            },
            pca: true,
            pca_variance: 0.95,
        }
    }
}

/// One classifier's settings; the kind is fixed by the table it sits in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemberConfig {
    pub hyper: Hyperparameters,
    pub class_weighting: ClassWeighting,
}

impl Default for MemberConfig {
    fn default() -> Self {
        Self {
            hyper: Hyperparameters::default(),
            class_weighting: ClassWeighting::InverseFrequency,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub svm: MemberConfig,
    pub gradient_boosting: MemberConfig,
    /// Ensemble weights for (svm, gradient_boosting).
    pub weights: (f64, f64),
    /// Also evaluate a random forest on the same folds.
    pub random_forest_baseline: bool,
    pub random_forest: MemberConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            svm: MemberConfig::default(),
            gradient_boosting: MemberConfig::default(),
            weights: (0.5, 0.5),
            random_forest_baseline: true,
            random_forest: MemberConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub schema: u32,
    /// Falls back to `SOMN_DATA_DIR` when unset.
    pub data_dir: Option<PathBuf>,
    pub channel: String,
    /// Use only the first N subjects (sorted by id).
    pub max_subjects: Option<usize>,
    pub seed: u64,
    pub jobs: Option<usize>,
    /// Epochs of wake kept on either side of the sleep period.
    pub wake_margin_epochs: Option<usize>,
    pub filter: FilterSpec,
    pub artifact: ArtifactPolicy,
    pub features: FeatureConfig,
    pub selection: SelectionConfig,
    pub model: ModelConfig,
    pub split: SplitConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema: CONFIG_SCHEMA,
            data_dir: None,
            channel: "EEG Fpz-Cz".into(),
            max_subjects: None,
            seed: 42,
            jobs: None,
            wake_margin_epochs: Some(60),
            filter: FilterSpec::default(),
            artifact: ArtifactPolicy::default(),
            features: FeatureConfig::default(),
            selection: SelectionConfig::default(),
            model: ModelConfig::default(),
            split: SplitConfig::default(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.schema != CONFIG_SCHEMA {
            return Err(invalid(format!(
                "schema {} unsupported (expected {CONFIG_SCHEMA})",
                self.schema
            )));
        }
        if self.channel.trim().is_empty() {
            return Err(invalid("channel is empty"));
        }
        if !(self.filter.low_hz > 0.0 && self.filter.low_hz < self.filter.high_hz)
            || self.filter.order == 0
        {
            return Err(invalid(
                "filter band must satisfy 0 < low < high and order ≥ 1",
            ));
        }
        self.artifact
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        for b in &self.features.bands {
            if !(b.lo_hz >= 0.0 && b.lo_hz < b.hi_hz) {
                return Err(invalid(format!("band {} has lo ≥ hi", b.name)));
            }
        }
        if self.features.dwt && self.features.dwt_levels == 0 {
            return Err(invalid("dwt_levels must be ≥ 1"));
        }
        if self.features.cwt && self.features.cwt_scales < 2 {
            return Err(invalid("cwt_scales must be ≥ 2"));
        }
        let s = &self.selection;
        if !(s.pca_variance > 0.0 && s.pca_variance <= 1.0) {
            return Err(invalid("pca_variance must lie in (0, 1]"));
        }
        if s.rfecv && (s.inner_folds < 2 || s.forest.step == 0 || s.forest.n_trees == 0) {
            return Err(invalid(
                "rfecv needs inner_folds ≥ 2, step ≥ 1, n_trees ≥ 1",
            ));
        }
        let m = &self.model;
        for kind in [
            ClassifierKind::SvmRbf,
            ClassifierKind::GradientBoosting,
            ClassifierKind::RandomForest,
        ] {
            self.classifier(kind, 0)
                .validate()
                .map_err(|e| invalid(format!("model {kind:?}: {e}")))?;
        }
        let (a, b) = m.weights;
        if !(a >= 0.0 && b >= 0.0 && a + b > 0.0) {
            return Err(invalid(
                "ensemble weights must be non-negative and not both zero",
            ));
        }
        match self.split.mode {
            SplitMode::Kfold if self.split.k < 2 => return Err(invalid("split.k must be ≥ 2")),
            SplitMode::Holdout => {
                let (tr, va, te) = self.split.ratios;
                if [tr, va, te].iter().any(|r| !(0.0..=1.0).contains(r))
                    || (tr + va + te - 1.0).abs() > 1e-9
                {
                    return Err(invalid("split.ratios must be non-negative and sum to 1"));
                }
            }
            _ => {}
        }
        if self.jobs == Some(0) {
            return Err(invalid("jobs must be ≥ 1"));
        }
        Ok(())
    }

    pub fn resolve_data_dir(&self) -> Result<PathBuf, PipelineError> {
        if let Some(d) = &self.data_dir {
            return Ok(d.clone());
        }
        match std::env::var_os(DATA_DIR_ENV) {
            Some(d) if !d.is_empty() => Ok(PathBuf::from(d)),
            _ => Err(invalid(format!(
                "no data_dir in config and {DATA_DIR_ENV} is not set"
            ))),
        }
    }

    /// Classifier spec for `kind` with the run seed folded in.
    pub fn classifier(&self, kind: ClassifierKind, stream: u64) -> ClassifierSpec {
        let member = match kind {
            ClassifierKind::SvmRbf => &self.model.svm,
            ClassifierKind::GradientBoosting => &self.model.gradient_boosting,
            ClassifierKind::RandomForest => &self.model.random_forest,
        };
        ClassifierSpec {
            kind,
            hyper: member.hyper.clone(),
            class_weighting: member.class_weighting,
            seed: self
                .seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add(stream),
        }
    }
}
