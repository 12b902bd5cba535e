use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use somn::edf::{expand_hypnogram, EdfFile};
use somn::eval::TestKind;
use somn::model::ModelBundle;
use somn::pipeline::synth::{write_dataset, SynthParams};
use somn::pipeline::{
    compare_reports, discover, fetch_manifest, hypnogram_svg, parse_fetch_manifest,
    prepare_dataset, prepare_recording, run_pipeline, score_recording, write_score_csv,
    CompareMetric, PipelineConfig, PipelineError, RunManifest, RunReport, UreqTransport,
    DATA_DIR_ENV,
};
use somn::preprocess::encode_epochs;

#[derive(Parser)]
#[command(
    name = "somn",
    version,
    about = "Single-channel EEG sleep staging on Sleep-EDF recordings"
)]
struct Cli {
    /// Pipeline configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Download files listed in a `<sha256> <url>` manifest and verify them.
    Fetch {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Prefix for manifest entries given as relative paths.
        #[arg(long)]
        base_url: Option<String>,
        #[arg(long, default_value_t = 3)]
        retries: u32,
    },
    /// Print the header, signals and annotation summary of an EDF file.
    Inspect { edf: PathBuf },
    /// Filter, epoch and normalize every recording into epoch caches.
    Preprocess {
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract the feature matrix of every recording to CSV.
    Features {
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate the ensemble, write reports and the model bundle.
    Run {
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Use a feature CSV instead of reading EDF files.
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Stage a PSG recording with a trained bundle.
    Score {
        psg: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write an SVG hypnogram.
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long)]
        channel: Option<String>,
    },
    /// Paired significance test between per-fold scores of two reports.
    Compare {
        report_a: PathBuf,
        report_b: PathBuf,
        #[arg(long, default_value = "ensemble")]
        model_a: String,
        /// Defaults to --model-a.
        #[arg(long)]
        model_b: Option<String>,
        #[arg(long, value_enum, default_value_t = CompareMetric::Accuracy)]
        metric: CompareMetric,
        #[arg(long, value_enum, default_value_t = TestArg::Wilcoxon)]
        test: TestArg,
        /// Write the comparison as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic Sleep-EDF style dataset.
    #[command(hide = true)]
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        subjects: usize,
        #[arg(long, default_value_t = 1)]
        nights: usize,
        #[arg(long, default_value_t = 4)]
        cycles: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TestArg {
    T,
    Wilcoxon,
}

fn load_config(cli: &Cli, data_dir: Option<&PathBuf>) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    if let Some(d) = data_dir {
        cfg.data_dir = Some(d.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sibling_manifest(path: &Path) -> (PathBuf, String) {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    (dir, name)
}

fn execute(cli: &Cli) -> Result<(), PipelineError> {
    match &cli.command {
        Command::Fetch {
            manifest,
            out,
            base_url,
            retries,
        } => {
            let text =
                std::fs::read_to_string(manifest).map_err(|e| PipelineError::io(manifest, e))?;
            let entries = parse_fetch_manifest(&text, base_url.as_deref())?;
            let s = fetch_manifest(
                &entries,
                out,
                &UreqTransport::default(),
                *retries,
                Duration::from_secs(2),
            )?;
            println!(
                "{} downloaded, {} already valid",
                s.downloaded.len(),
                s.skipped.len()
            );
        }
        Command::Inspect { edf } => inspect(edf)?,
        Command::Preprocess { data_dir, out } => {
            let cfg = load_config(cli, data_dir.as_ref())?;
            let mut manifest = RunManifest::new("preprocess", cfg.to_toml());
            for pair in discover(&cfg)? {
                manifest.add_input(&pair.psg)?;
                manifest.add_input(&pair.hypnogram)?;
                let rec = prepare_recording(&pair, &cfg)?;
                let (bytes, _) = encode_epochs(&rec.epochs);
                manifest.write_output(out, &format!("{}.epochs", pair.id()), &bytes)?;
                println!("{}: {} epochs", pair.id(), rec.stats.kept);
            }
            manifest.save(&out.join("manifest.json"))?;
        }
        Command::Features { data_dir, out } => {
            let cfg = load_config(cli, data_dir.as_ref())?;
            let mut manifest = RunManifest::new("features", cfg.to_toml());
            let pairs = discover(&cfg)?;
            for p in &pairs {
                manifest.add_input(&p.psg)?;
                manifest.add_input(&p.hypnogram)?;
            }
            let (m, _) = manifest.time("features", || prepare_dataset(&cfg, &pairs))?;
            let mut csv = Vec::new();
            somn::features::write_feature_csv(&mut csv, &m).map_err(|e| {
                PipelineError::Feature {
                    context: out.display().to_string(),
                    source: e,
                }
            })?;
            let (dir, name) = sibling_manifest(out);
            manifest.write_output(&dir, &name, &csv)?;
            manifest.save(&dir.join(format!("{name}.manifest.json")))?;
            println!("{} rows × {} features", m.n_rows(), m.n_cols());
        }
        Command::Run {
            data_dir,
            out,
            features,
        } => {
            let cfg = load_config(cli, data_dir.as_ref())?;
            let outcome = run_pipeline(&cfg, out, features.as_deref())?;
            print!("{}", outcome.report.table());
        }
        Command::Score {
            psg,
            model,
            out,
            svg,
            channel,
        } => {
            let bundle = ModelBundle::load(model)
                .map_err(|e| PipelineError::model(model.display().to_string(), e))?;
            let rows = score_recording(psg, &bundle, channel.as_deref())?;
            let mut manifest = RunManifest::new("score", bundle.config.clone());
            manifest.add_input(psg)?;
            manifest.add_input(model)?;
            let mut csv = Vec::new();
            write_score_csv(&mut csv, &rows).map_err(|e| PipelineError::io(out, e))?;
            let (dir, name) = sibling_manifest(out);
            manifest.write_output(&dir, &name, &csv)?;
            if let Some(svg) = svg {
                let stages: Vec<_> = rows.iter().map(|r| r.stage).collect();
                let title = psg
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let (sdir, sname) = sibling_manifest(svg);
                if sdir != dir {
                    return Err(PipelineError::Usage(
                        "--svg must be in the same directory as --out".into(),
                    ));
                }
                manifest.write_output(&dir, &sname, hypnogram_svg(&stages, &title).as_bytes())?;
            }
            manifest.save(&dir.join(format!("{name}.manifest.json")))?;
            println!("{} epochs scored", rows.len());
        }
        Command::Compare {
            report_a,
            report_b,
            model_a,
            model_b,
            metric,
            test,
            out,
        } => {
            let a = RunReport::load(report_a)?;
            let b = RunReport::load(report_b)?;
            let test = match test {
                TestArg::T => TestKind::PairedT,
                TestArg::Wilcoxon => TestKind::Wilcoxon,
            };
            let c = compare_reports(
                &a,
                model_a,
                &b,
                model_b.as_deref().unwrap_or(model_a),
                *metric,
                test,
            )?;
            println!("{}", c.verdict());
            if let Some(out) = out {
                let mut manifest = RunManifest::new("compare", String::new());
                manifest.add_input(report_a)?;
                manifest.add_input(report_b)?;
                let json = serde_json::to_vec_pretty(&c).expect("comparison serializes");
                let (dir, name) = sibling_manifest(out);
                manifest.write_output(&dir, &name, &json)?;
                manifest.save(&dir.join(format!("{name}.manifest.json")))?;
            }
        }
        Command::Synth {
            out,
            subjects,
            nights,
            cycles,
        } => {
            let params = SynthParams {
                subjects: *subjects,
                nights: *nights,
                cycles: *cycles,
                seed: cli.seed.unwrap_or(SynthParams::default().seed),
                ..SynthParams::default()
            };
            let files = write_dataset(out, &params)?;
            println!("{} synthetic recordings in {}", files.len(), out.display());
        }
    }
    Ok(())
}

fn inspect(path: &Path) -> Result<(), PipelineError> {
    let mut f = EdfFile::open(path).map_err(|e| PipelineError::edf(path, e))?;
    let h = f.header().clone();
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "file:        {}", path.display());
    let _ = writeln!(
        out,
        "format:      {}",
        if h.is_edf_plus() { "EDF+" } else { "EDF" }
    );
    let _ = writeln!(out, "patient:     {}", h.patient_id);
    let _ = writeln!(out, "recording:   {}", h.recording_id);
    let _ = writeln!(out, "start:       {}", h.start);
    let _ = writeln!(
        out,
        "records:     {} × {} s",
        h.n_records, h.record_duration_s
    );
    for s in &h.signals {
        if s.is_annotation() {
            let _ = writeln!(out, "  {:<20} (annotations)", s.label);
            continue;
        }
        let _ = writeln!(
            out,
            "  {:<20} {:>8.2} Hz  [{}, {}] {}",
            s.label,
            s.sample_rate(h.record_duration_s),
            s.physical_min,
            s.physical_max,
            s.physical_dim
        );
    }
    if h.signals.iter().any(|s| s.is_annotation()) {
        let events = f
            .read_annotations()
            .map_err(|e| PipelineError::edf(path, e))?;
        let span: f64 = events.iter().map(|e| e.end_s()).fold(0.0, f64::max);
        let hyp = expand_hypnogram(&events, span, path.display().to_string())
            .map_err(|e| PipelineError::edf(path, e))?;
        let _ = writeln!(
            out,
            "annotations: {} events, {} epochs",
            events.len(),
            hyp.len()
        );
        for s in somn::SleepStage::ALL {
            let n = hyp.stages.iter().filter(|&&v| v == s).count();
            let _ = writeln!(out, "  {s:<9} {n}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    log::debug!("data root fallback: ${DATA_DIR_ENV}");
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
