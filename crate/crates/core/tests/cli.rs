use std::path::PathBuf;
use std::process::{Command, Output};
use std::sync::OnceLock;

use somn::pipeline::synth::{write_dataset, SynthParams};
use somn::pipeline::{RunManifest, RunReport};

const TINY: &str = r#"
seed = 11
wake_margin_epochs = 20

[selection]
rfecv = true
inner_folds = 2
pca = true

[selection.forest]
n_trees = 8
max_rows = 600

[model.svm.hyper]
max_train_rows = 300

[model.gradient_boosting.hyper]
n_stages = 15

[model.random_forest.hyper]
n_trees = 15

[split]
mode = "kfold"
k = 3
"#;

fn somn(args: &[&std::ffi::OsStr]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_somn"))
        .args(args)
        .env_remove("SOMN_DATA_DIR")
        .output()
        .expect("spawn somn")
}

macro_rules! somn {
    ($($a:expr),* $(,)?) => {
        somn(&[$(AsRef::<std::ffi::OsStr>::as_ref(&$a)),*])
    };
}

fn ok(o: &Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8_lossy(&o.stdout).into_owned()
}

struct Fixture {
    root: tempfile::TempDir,
}

impl Fixture {
    fn data(&self) -> PathBuf {
        self.root.path().join("data")
    }
    fn config(&self) -> PathBuf {
        self.root.path().join("tiny.toml")
    }
    fn run(&self) -> PathBuf {
        self.root.path().join("run")
    }
}

/// Three short synthetic nights and one `somn run` over them.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let f = Fixture {
            root: tempfile::tempdir().unwrap(),
        };
        write_dataset(
            &f.data(),
            &SynthParams {
                subjects: 3,
                cycles: 1,
                max_epochs: Some(260),
                ..SynthParams::default()
            },
        )
        .unwrap();
        std::fs::write(f.config(), TINY).unwrap();
        let out = ok(&somn!(
            "--config",
            f.config(),
            "run",
            "--data-dir",
            f.data(),
            "--out",
            f.run()
        ));
        assert!(out.contains("SVM+GB ensemble"), "{out}");
        assert!(out.contains("Published reference (Fpz-Cz)"), "{out}");
        f
    })
}

fn polyline_points(svg: &str) -> usize {
    let pts = svg
        .split("points=\"")
        .nth(1)
        .unwrap()
        .split('"')
        .next()
        .unwrap();
    if pts.is_empty() {
        0
    } else {
        pts.split(' ').count()
    }
}

#[test]
fn run_writes_verified_outputs() {
    let f = fixture();
    for name in [
        "report.json",
        "table.txt",
        "confusion.csv",
        "selection_curve.csv",
        "model.somn",
        "manifest.json",
    ] {
        assert!(f.run().join(name).exists(), "{name} missing");
    }
    let m = RunManifest::load(&f.run().join("manifest.json")).unwrap();
    assert_eq!(m.command, "run");
    assert!(m.verify(&f.run()).unwrap().is_empty());
    assert_eq!(m.inputs.len(), 6, "{:?}", m.inputs.keys());
    let r = RunReport::load(&f.run().join("report.json")).unwrap();
    assert_eq!(r.folds.len(), 3);
    for fold in &r.folds {
        assert!(fold
            .train_subjects
            .iter()
            .all(|s| !fold.test_subjects.contains(s)));
    }
    assert_eq!(r.dataset.subjects.len(), 3);
}

#[test]
fn score_one_hour_and_rescore_identically() {
    let f = fixture();
    let hour = f.root.path().join("hour");
    write_dataset(
        &hour,
        &SynthParams {
            subjects: 1,
            seed: 99,
            max_epochs: Some(120),
            ..SynthParams::default()
        },
    )
    .unwrap();
    let psg = hour.join("SC4001E0-PSG.edf");
    let out = f.root.path().join("scored");
    std::fs::create_dir_all(&out).unwrap();
    let csv = out.join("a.csv");
    let svg = out.join("a.svg");
    let model = f.run().join("model.somn");
    let stdout = ok(&somn!(
        "score", psg, "--model", model, "--out", csv, "--svg", svg
    ));
    assert!(stdout.contains("120 epochs scored"), "{stdout}");
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epoch,onset_s,stage,p_W,p_N1,p_N2,p_N3,p_REM"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 120);
    let stages: Vec<&str> = rows.iter().map(|r| r.split(',').nth(2).unwrap()).collect();
    for r in &rows {
        let p: f64 = r
            .split(',')
            .skip(3)
            .map(|v| v.parse::<f64>().unwrap())
            .sum();
        assert!((p - 1.0).abs() < 1e-5, "{r}");
    }
    let transitions = stages.windows(2).filter(|w| w[0] != w[1]).count();
    let svg_text = std::fs::read_to_string(&svg).unwrap();
    assert_eq!(svg_text.matches("<polyline").count(), 1);
    assert_eq!(polyline_points(&svg_text), 2 * (transitions + 1));

    let again = out.join("b.csv");
    ok(&somn!("score", psg, "--model", model, "--out", again));
    assert_eq!(std::fs::read(&csv).unwrap(), std::fs::read(&again).unwrap());
    let m = RunManifest::load(&out.join("a.csv.manifest.json")).unwrap();
    assert!(m.verify(&out).unwrap().is_empty());
    assert_eq!(m.outputs.len(), 2);

    // svg elsewhere is a usage error
    let bad = somn!(
        "score",
        psg,
        "--model",
        model,
        "--out",
        csv,
        "--svg",
        f.root.path().join("elsewhere.svg")
    );
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn compare_report_with_itself() {
    let f = fixture();
    let report = f.run().join("report.json");
    let out = f.root.path().join("cmp").join("c.json");
    let stdout = ok(&somn!(
        "compare",
        report,
        report,
        "--model-b",
        "ensemble",
        "--metric",
        "macro-f1",
        "--out",
        out
    ));
    assert!(!stdout.trim().is_empty());
    let c: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(c["significant"], serde_json::Value::Bool(false));
    assert!(out.with_file_name("c.json.manifest.json").exists());

    // majority vs ensemble under a paired t-test runs too
    ok(&somn!(
        "compare",
        report,
        report,
        "--model-a",
        "majority",
        "--test",
        "t"
    ));
    let unknown = somn!("compare", report, report, "--model-a", "nope");
    assert_eq!(unknown.status.code(), Some(1));
}

#[test]
fn features_csv_feeds_run() {
    let f = fixture();
    let csv = f.root.path().join("feat").join("features.csv");
    let stdout = ok(&somn!(
        "--config",
        f.config(),
        "features",
        "--data-dir",
        f.data(),
        "--out",
        csv
    ));
    assert!(stdout.contains("× 57 features"), "{stdout}");
    let m = RunManifest::load(&csv.with_file_name("features.csv.manifest.json")).unwrap();
    assert!(m.verify(csv.parent().unwrap()).unwrap().is_empty());

    let out = f.root.path().join("run_from_csv");
    ok(&somn!(
        "--config",
        f.config(),
        "run",
        "--data-dir",
        f.data(),
        "--out",
        out,
        "--features",
        csv
    ));
    let a = RunReport::load(&f.run().join("report.json")).unwrap();
    let b = RunReport::load(&out.join("report.json")).unwrap();
    assert_eq!(a.models, b.models);
}

#[test]
fn preprocess_and_inspect() {
    let f = fixture();
    let out = f.root.path().join("epochs");
    let stdout = ok(&somn!(
        "--config",
        f.config(),
        "preprocess",
        "--data-dir",
        f.data(),
        "--out",
        out
    ));
    assert_eq!(stdout.lines().count(), 3, "{stdout}");
    let m = RunManifest::load(&out.join("manifest.json")).unwrap();
    assert_eq!(m.outputs.len(), 3);
    assert!(m.verify(&out).unwrap().is_empty());

    let psg = ok(&somn!("inspect", f.data().join("SC4001E0-PSG.edf")));
    assert!(
        psg.contains("EEG Fpz-Cz") && psg.contains("100.00 Hz"),
        "{psg}"
    );
    let hyp = ok(&somn!("inspect", f.data().join("SC4001EC-Hypnogram.edf")));
    assert!(
        hyp.contains("(annotations)") && hyp.contains("annotations:"),
        "{hyp}"
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(somn!("--help").status.code(), Some(0));
    assert_eq!(somn!("--version").status.code(), Some(0));
    assert_eq!(somn!("frobnicate").status.code(), Some(1));

    let bad_cfg = dir.path().join("bad.toml");
    std::fs::write(&bad_cfg, "no_such_key = 1\n").unwrap();
    let o = somn!("--config", bad_cfg, "run", "--out", dir.path().join("o"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_key"));

    // no data directory anywhere
    let o = somn!("run", "--out", dir.path().join("o"));
    assert_eq!(
        o.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    // empty data directory
    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    let o = somn!("run", "--data-dir", empty, "--out", dir.path().join("o"));
    assert_eq!(o.status.code(), Some(2));

    let o = somn!(
        "score",
        dir.path().join("missing.edf"),
        "--model",
        dir.path().join("missing.somn"),
        "--out",
        dir.path().join("s.csv")
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.somn"));
}

#[test]
fn wrong_channel_is_a_data_error() {
    let f = fixture();
    let o = somn!(
        "score",
        f.data().join("SC4001E0-PSG.edf"),
        "--model",
        f.run().join("model.somn"),
        "--out",
        f.root.path().join("x.csv"),
        "--channel",
        "EEG Cz"
    );
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("EEG Cz") && err.contains("SC4001E0-PSG.edf"),
        "{err}"
    );
}
