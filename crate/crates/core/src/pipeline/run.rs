use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    discover, feature_csv_matrix, prepare_dataset, PipelineConfig, PipelineError, RecordingStats,
    RunManifest, SplitMode, SOFTWARE_VERSION,
};
use crate::eval::{
    compute_metrics, confusion_matrix, kfold_plan, rows_for_subjects, subject_split, MetricsReport,
};
use crate::features::{feature_names, FeatureMatrix};
use crate::model::bundle::BundleMeta;
use crate::model::{
    ensemble_soft_vote, predict, train_classifier, ClassifierKind, EnsembleModel, ModelBundle,
    TrainedClassifier,
};
use crate::select::{pca_fit, pca_transform, rfecv_select, PcaModel, SelectionModel};
use crate::SleepStage;

/// Published single-channel Fpz-Cz figures shown beside our results for
/// orientation only.
pub const REFERENCE_ACC: f64 = 88.37;
pub const REFERENCE_MF1: f64 = 73.15;

pub const MODEL_NAMES: [&str; 5] = [
    "ensemble",
    "svm_rbf",
    "gradient_boosting",
    "random_forest",
    "majority",
];

const STREAM_SVM: u64 = 1;
const STREAM_GB: u64 = 2;
const STREAM_RF: u64 = 3;
const STREAM_SELECT: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub folds: Vec<MetricsReport>,
    /// Metrics on the pooled confusion matrix of all test folds.
    pub pooled: MetricsReport,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_macro_f1: f64,
    pub std_macro_f1: f64,
    pub mean_kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldInfo {
    pub id: usize,
    pub train_subjects: Vec<String>,
    pub test_subjects: Vec<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub n_selected: usize,
    pub pca_components: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub subjects: Vec<String>,
    pub n_epochs: usize,
    pub class_counts: BTreeMap<String, usize>,
    pub feature_names: Vec<String>,
    /// Empty when features were loaded from CSV.
    pub recordings: Vec<RecordingStats>,
}

/// Everything `run` measured. Contains no timestamps or timings, so two runs
/// on the same data and config serialize identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub software_version: String,
    pub manifest: String,
    pub config: String,
    pub split_mode: SplitMode,
    pub seed: u64,
    pub dataset: DatasetSummary,
    pub folds: Vec<FoldInfo>,
    pub models: BTreeMap<String, ModelSummary>,
    /// Holdout only: metrics on the validation subjects.
    pub validation: Option<BTreeMap<String, MetricsReport>>,
    pub final_selection: Vec<String>,
    pub final_pca_components: Option<usize>,
}

impl RunReport {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let bytes = std::fs::read(path).map_err(|e| PipelineError::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| PipelineError::Json {
            context: path.display().to_string(),
            source: e,
        })
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("report serializes");
        v.push(b'\n');
        v
    }

    /// Aligned text table: one row per model plus the published reference.
    pub fn table(&self) -> String {
        fn label(name: &str) -> &str {
            match name {
                "ensemble" => "SVM+GB ensemble",
                "svm_rbf" => "SVM (RBF)",
                "gradient_boosting" => "Gradient boosting",
                "random_forest" => "Random forest",
                "majority" => "Majority class",
                other => other,
            }
        }
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<32}{:>8}{:>8}{:>8}",
            "Model", "ACC %", "MF1 %", "Kappa"
        );
        for name in MODEL_NAMES {
            if let Some(m) = self.models.get(name) {
                let _ = writeln!(
                    s,
                    "{:<32}{:>8.2}{:>8.2}{:>8.3}",
                    label(name),
                    100.0 * m.mean_accuracy,
                    100.0 * m.mean_macro_f1,
                    m.mean_kappa
                );
            }
        }
        let _ = writeln!(
            s,
            "{:<32}{:>8.2}{:>8.2}{:>8}",
            "Published reference (Fpz-Cz)", REFERENCE_ACC, REFERENCE_MF1, "-"
        );
        let _ = writeln!(
            s,
            "\n{} evaluation, {} subjects, {} epochs; manifest: {}",
            match self.split_mode {
                SplitMode::Kfold => format!("{}-fold subject-grouped", self.folds.len()),
                SplitMode::Holdout => "holdout".to_string(),
            },
            self.dataset.subjects.len(),
            self.dataset.n_epochs,
            self.manifest
        );
        s
    }
}

pub struct RunOutcome {
    pub report: RunReport,
    pub manifest: RunManifest,
    pub bundle: ModelBundle,
}

/// Fitted selection, projection and classifiers for one training set.
struct FittedStack {
    selection: SelectionModel,
    pca: Option<PcaModel>,
    ensemble: EnsembleModel,
    forest: Option<TrainedClassifier>,
    majority: SleepStage,
}

impl FittedStack {
    fn transform(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, PipelineError> {
        let sel = |e| PipelineError::Select {
            context: "transform".into(),
            source: e,
        };
        let xs = self.selection.apply(x).map_err(sel)?;
        match &self.pca {
            Some(p) => pca_transform(p, &xs).map_err(sel),
            None => Ok(xs),
        }
    }

    fn predictions(
        &self,
        x: &[Vec<f64>],
    ) -> Result<BTreeMap<&'static str, Vec<SleepStage>>, PipelineError> {
        let z = self.transform(x)?;
        let mut out = BTreeMap::new();
        let (ens, _) = ensemble_soft_vote(&self.ensemble, &z)
            .map_err(|e| PipelineError::model("ensemble", e))?;
        out.insert("ensemble", ens);
        for (name, m) in ["svm_rbf", "gradient_boosting"]
            .iter()
            .zip(&self.ensemble.members)
        {
            out.insert(
                *name,
                predict(m, &z).map_err(|e| PipelineError::model(*name, e))?,
            );
        }
        if let Some(rf) = &self.forest {
            out.insert(
                "random_forest",
                predict(rf, &z).map_err(|e| PipelineError::model("random_forest", e))?,
            );
        }
        out.insert("majority", vec![self.majority; x.len()]);
        Ok(out)
    }
}

fn take_rows(m: &FeatureMatrix, rows: &[usize]) -> (Vec<Vec<f64>>, Vec<SleepStage>) {
    (
        rows.iter().map(|&i| m.rows[i].clone()).collect(),
        rows.iter().map(|&i| m.stages[i]).collect(),
    )
}

fn majority_class(y: &[SleepStage]) -> SleepStage {
    let mut best = (0, SleepStage::W);
    for s in SleepStage::SCORED {
        let c = y.iter().filter(|&&v| v == s).count();
        if c > best.0 {
            best = (c, s);
        }
    }
    best.1
}

fn fit_stack(
    cfg: &PipelineConfig,
    m: &FeatureMatrix,
    train_rows: &[usize],
    train_subjects: &[String],
    salt: u64,
    ctx: &str,
) -> Result<FittedStack, PipelineError> {
    let (x, y) = take_rows(m, train_rows);
    let sel_err = |e| PipelineError::Select {
        context: ctx.to_string(),
        source: e,
    };
    let selection = if cfg.selection.rfecv {
        let k = cfg.selection.inner_folds.min(train_subjects.len());
        if k < 2 {
            log::warn!("{ctx}: fewer than two training subjects, skipping RFECV");
            SelectionModel::identity(m.n_cols())
        } else {
            let seed = cfg.seed ^ salt.wrapping_mul(0x100_0000_01B3);
            let inner = kfold_plan(train_subjects, k, seed).map_err(|e| PipelineError::Eval {
                context: ctx.to_string(),
                source: e,
            })?;
            let groups: Vec<&str> = train_rows
                .iter()
                .map(|&i| m.keys[i].subject.as_str())
                .collect();
            let folds: Vec<(Vec<usize>, Vec<usize>)> = inner
                .iter()
                .map(|f| {
                    (
                        rows_for_subjects(groups.iter().copied(), &f.train),
                        rows_for_subjects(groups.iter().copied(), &f.test),
                    )
                })
                .collect();
            let mut params = cfg.selection.forest.clone();
            params.seed = seed.wrapping_add(STREAM_SELECT);
            rfecv_select(&x, &y, &folds, &params).map_err(sel_err)?
        }
    } else {
        SelectionModel::identity(m.n_cols())
    };
    let xs = selection.apply(&x).map_err(sel_err)?;
    let (pca, z) = if cfg.selection.pca {
        let p = pca_fit(&xs, cfg.selection.pca_variance).map_err(sel_err)?;
        let z = pca_transform(&p, &xs).map_err(sel_err)?;
        (Some(p), z)
    } else {
        (None, xs)
    };
    let spec = |kind, stream: u64| {
        let mut s = cfg.classifier(kind, stream);
        s.seed = s.seed.wrapping_add(salt << 8);
        s
    };
    let svm = train_classifier(&spec(ClassifierKind::SvmRbf, STREAM_SVM), &z, &y)
        .map_err(|e| PipelineError::model(format!("{ctx} svm"), e))?;
    let gb = train_classifier(&spec(ClassifierKind::GradientBoosting, STREAM_GB), &z, &y)
        .map_err(|e| PipelineError::model(format!("{ctx} gradient boosting"), e))?;
    let (wa, wb) = cfg.model.weights;
    let ensemble = EnsembleModel::new(vec![svm, gb], vec![wa, wb])
        .map_err(|e| PipelineError::model(ctx, e))?;
    let forest = if cfg.model.random_forest_baseline {
        Some(
            train_classifier(&spec(ClassifierKind::RandomForest, STREAM_RF), &z, &y)
                .map_err(|e| PipelineError::model(format!("{ctx} random forest"), e))?,
        )
    } else {
        None
    };
    Ok(FittedStack {
        selection,
        pca,
        ensemble,
        forest,
        majority: majority_class(&y),
    })
}

fn score(
    truth: &[SleepStage],
    pred: &[SleepStage],
    fold: Option<usize>,
) -> Result<MetricsReport, PipelineError> {
    let cm =
        confusion_matrix(truth, pred, &SleepStage::SCORED).map_err(|e| PipelineError::Eval {
            context: "metrics".into(),
            source: e,
        })?;
    let mut r = compute_metrics(&cm);
    r.fold = fold;
    Ok(r)
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = if n > 1.0 {
        xs.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn summarize(folds: Vec<MetricsReport>) -> ModelSummary {
    let mut pooled_cm = folds[0].confusion.clone();
    for f in &folds[1..] {
        pooled_cm.add(&f.confusion);
    }
    let (mean_accuracy, std_accuracy) = mean_std(folds.iter().map(|f| f.accuracy));
    let (mean_macro_f1, std_macro_f1) = mean_std(folds.iter().map(|f| f.macro_f1));
    let (mean_kappa, _) = mean_std(folds.iter().map(|f| f.kappa));
    ModelSummary {
        pooled: compute_metrics(&pooled_cm),
        folds,
        mean_accuracy,
        std_accuracy,
        mean_macro_f1,
        std_macro_f1,
        mean_kappa,
    }
}

struct Split {
    id: usize,
    train: Vec<String>,
    test: Vec<String>,
}

/// parse → preprocess → features → split → select → train → evaluate, then
/// a final fit for the model bundle. Writes `report.json`, `table.txt`,
/// `confusion.csv`, `selection_curve.csv`, `model.somn` and `manifest.json`
/// into `out_dir`.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    out_dir: &Path,
    features_csv: Option<&Path>,
) -> Result<RunOutcome, PipelineError> {
    cfg.validate()?;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = cfg.jobs {
            b = b.num_threads(j);
        }
        b.build()
            .map_err(|e| PipelineError::Config(format!("worker pool: {e}")))?
    };
    pool.install(|| run_inner(cfg, out_dir, features_csv))
}

fn run_inner(
    cfg: &PipelineConfig,
    out_dir: &Path,
    features_csv: Option<&Path>,
) -> Result<RunOutcome, PipelineError> {
    let config_text = cfg.to_toml();
    let mut manifest = RunManifest::new("run", config_text.clone());

    let (matrix, recordings) = match features_csv {
        Some(path) => {
            manifest.add_input(path)?;
            let m = manifest.time("features", || feature_csv_matrix(path))?;
            (m, Vec::new())
        }
        None => {
            let pairs = discover(cfg)?;
            for p in &pairs {
                manifest.add_input(&p.psg)?;
                manifest.add_input(&p.hypnogram)?;
            }
            manifest.time("preprocess+features", || prepare_dataset(cfg, &pairs))?
        }
    };
    if matrix.n_rows() == 0 {
        return Err(PipelineError::Eval {
            context: "dataset".into(),
            source: crate::eval::EvalError::EmptyInput,
        });
    }
    let mut subjects: Vec<String> = matrix.groups().map(str::to_string).collect();
    subjects.sort();
    subjects.dedup();
    let mut class_counts = BTreeMap::new();
    for s in &matrix.stages {
        *class_counts.entry(s.to_string()).or_insert(0) += 1;
    }
    log::info!(
        "{} epochs from {} subjects",
        matrix.n_rows(),
        subjects.len()
    );

    let eval_err = |e| PipelineError::Eval {
        context: "split".into(),
        source: e,
    };
    let (splits, validation_subjects, final_subjects) = match cfg.split.mode {
        SplitMode::Kfold => {
            let folds = kfold_plan(&subjects, cfg.split.k, cfg.seed).map_err(eval_err)?;
            let splits = folds
                .into_iter()
                .map(|f| Split {
                    id: f.id,
                    train: f.train,
                    test: f.test,
                })
                .collect();
            (splits, None, subjects.clone())
        }
        SplitMode::Holdout => {
            let plan = subject_split(&subjects, cfg.split.ratios, cfg.seed).map_err(eval_err)?;
            let split = Split {
                id: 0,
                train: plan.train.clone(),
                test: plan.test,
            };
            (vec![split], Some(plan.val), plan.train)
        }
    };

    let mut per_model: BTreeMap<&'static str, Vec<MetricsReport>> = BTreeMap::new();
    let mut fold_infos = Vec::new();
    let mut validation = None;
    for split in &splits {
        let train_rows = rows_for_subjects(matrix.groups(), &split.train);
        let test_rows = rows_for_subjects(matrix.groups(), &split.test);
        let ctx = format!("fold {}", split.id);
        let stack = manifest.time(&ctx, || {
            fit_stack(
                cfg,
                &matrix,
                &train_rows,
                &split.train,
                split.id as u64 + 1,
                &ctx,
            )
        })?;
        let (x_test, y_test) = take_rows(&matrix, &test_rows);
        for (name, pred) in stack.predictions(&x_test)? {
            per_model
                .entry(name)
                .or_default()
                .push(score(&y_test, &pred, Some(split.id))?);
        }
        if let Some(val) = &validation_subjects {
            let rows = rows_for_subjects(matrix.groups(), val);
            if !rows.is_empty() {
                let (xv, yv) = take_rows(&matrix, &rows);
                let mut v = BTreeMap::new();
                for (name, pred) in stack.predictions(&xv)? {
                    v.insert(name.to_string(), score(&yv, &pred, None)?);
                }
                validation = Some(v);
            }
        }
        let ens = &per_model["ensemble"];
        log::info!(
            "{ctx}: ensemble acc {:.4} mf1 {:.4}",
            ens.last().unwrap().accuracy,
            ens.last().unwrap().macro_f1
        );
        fold_infos.push(FoldInfo {
            id: split.id,
            train_subjects: split.train.clone(),
            test_subjects: split.test.clone(),
            n_train: train_rows.len(),
            n_test: test_rows.len(),
            n_selected: stack.selection.selected.len(),
            pca_components: stack.pca.as_ref().map(|p| p.k),
        });
    }

    let final_rows = rows_for_subjects(matrix.groups(), &final_subjects);
    let final_stack = manifest.time("final fit", || {
        fit_stack(cfg, &matrix, &final_rows, &final_subjects, 0, "final model")
    })?;

    let models: BTreeMap<String, ModelSummary> = per_model
        .into_iter()
        .map(|(k, v)| (k.to_string(), summarize(v)))
        .collect();
    let report = RunReport {
        software_version: SOFTWARE_VERSION.to_string(),
        manifest: "manifest.json".into(),
        config: config_text.clone(),
        split_mode: cfg.split.mode,
        seed: cfg.seed,
        dataset: DatasetSummary {
            subjects,
            n_epochs: matrix.n_rows(),
            class_counts,
            feature_names: matrix.names.clone(),
            recordings,
        },
        folds: fold_infos,
        models,
        validation,
        final_selection: final_stack
            .selection
            .selected
            .iter()
            .map(|&j| matrix.names[j].clone())
            .collect(),
        final_pca_components: final_stack.pca.as_ref().map(|p| p.k),
    };
    if matrix.names != feature_names(&cfg.features) {
        log::warn!("feature columns differ from the configured extractor; the bundle cannot score EDF files");
    }
    let bundle = ModelBundle {
        meta: BundleMeta {
            software_version: SOFTWARE_VERSION.to_string(),
            feature_names: matrix.names.clone(),
        },
        config: config_text,
        selection: final_stack.selection,
        pca: final_stack.pca,
        ensemble: final_stack.ensemble,
    };

    manifest.write_output(out_dir, "report.json", &report.to_json())?;
    manifest.write_output(out_dir, "table.txt", report.table().as_bytes())?;
    let mut csv = Vec::new();
    crate::eval::write_confusion_csv(&mut csv, &report.models["ensemble"].pooled.confusion)
        .map_err(|e| PipelineError::io(&out_dir.join("confusion.csv"), e))?;
    manifest.write_output(out_dir, "confusion.csv", &csv)?;
    let mut curve = Vec::new();
    bundle
        .selection
        .write_curve_csv(&mut curve)
        .map_err(|e| PipelineError::Select {
            context: "selection curve".into(),
            source: e,
        })?;
    manifest.write_output(out_dir, "selection_curve.csv", &curve)?;
    let bytes = bundle
        .to_bytes()
        .map_err(|e| PipelineError::model("bundle", e))?;
    manifest.write_output(out_dir, "model.somn", &bytes)?;
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(RunOutcome {
        report,
        manifest,
        bundle,
    })
}
