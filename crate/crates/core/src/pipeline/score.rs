use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use super::{PipelineConfig, PipelineError};
use crate::edf::{EdfFile, EPOCH_SECONDS};
use crate::features::FeatureExtractor;
use crate::model::{ensemble_soft_vote, ModelBundle};
use crate::preprocess::{bandpass_filter, EpochRecord, ZScore};
use crate::select::pca_transform;
use crate::SleepStage;

/// Hypnogram rows, top to bottom.
pub const STAGE_AXIS: [SleepStage; 5] = [
    SleepStage::W,
    SleepStage::Rem,
    SleepStage::N1,
    SleepStage::N2,
    SleepStage::N3,
];

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredEpoch {
    pub epoch: usize,
    pub onset_s: f64,
    pub stage: SleepStage,
    /// Probabilities in [`SleepStage::SCORED`] order; classes the model never
    /// saw get 0.
    pub probs: [f64; 5],
}

/// Stage every whole 30 s epoch of `psg` with the bundle's ensemble.
///
/// Preprocessing and feature settings come from the configuration stored in
/// the bundle; `channel` overrides its channel. Every epoch is scored —
/// artifact epochs are only excluded from the z-score fit.
pub fn score_recording(
    psg: &Path,
    bundle: &ModelBundle,
    channel: Option<&str>,
) -> Result<Vec<ScoredEpoch>, PipelineError> {
    let cfg = PipelineConfig::from_toml(&bundle.config)?;
    let channel = channel.unwrap_or(&cfg.channel);
    let ctx = |e| PipelineError::Preprocess {
        context: psg.display().to_string(),
        source: e,
    };
    let mut file = EdfFile::open(psg).map_err(|e| PipelineError::edf(psg, e))?;
    let trace = file
        .read_signal(channel)
        .map_err(|e| PipelineError::edf(psg, e))?;
    cfg.filter.validate(trace.fs).map_err(ctx)?;
    let filtered = bandpass_filter(&trace, &cfg.filter).map_err(ctx)?;
    let per_epoch = (trace.fs * EPOCH_SECONDS).round() as usize;
    if per_epoch == 0 || ((trace.fs * EPOCH_SECONDS) - per_epoch as f64).abs() > 1e-9 {
        return Err(ctx(crate::preprocess::PreprocessError::SamplingMismatch {
            fs: trace.fs,
        }));
    }
    let mut epochs: Vec<EpochRecord> = filtered
        .samples
        .chunks_exact(per_epoch)
        .enumerate()
        .map(|(i, xs)| EpochRecord::new("", "", i, SleepStage::Excluded, trace.fs, xs.to_vec()))
        .collect();
    if epochs.is_empty() {
        return Ok(Vec::new());
    }
    let clean: Vec<f64> = epochs
        .iter()
        .filter(|e| !cfg.artifact.is_artifact(e))
        .flat_map(|e| e.samples.iter().copied())
        .collect();
    let z = if clean.is_empty() {
        ZScore::fit(&filtered.samples[..epochs.len() * per_epoch])
    } else {
        ZScore::fit(&clean)
    }
    .map_err(ctx)?;
    for e in epochs.iter_mut() {
        z.apply(&mut e.samples);
    }

    let feat_err = |e| PipelineError::Feature {
        context: psg.display().to_string(),
        source: e,
    };
    let ex = FeatureExtractor::new(&cfg.features, trace.fs, per_epoch).map_err(feat_err)?;
    if ex.names() != bundle.meta.feature_names.as_slice() {
        return Err(PipelineError::Config(
            "bundle feature columns do not match its feature configuration".into(),
        ));
    }
    let rows: Vec<Vec<f64>> = epochs
        .par_iter()
        .map(|e| crate::features::epoch_features(e, &ex).map(|(v, _)| v))
        .collect::<Result<_, _>>()
        .map_err(feat_err)?;
    let sel = |e| PipelineError::Select {
        context: psg.display().to_string(),
        source: e,
    };
    let mut x = bundle.selection.apply(&rows).map_err(sel)?;
    if let Some(p) = &bundle.pca {
        x = pca_transform(p, &x).map_err(sel)?;
    }
    let (labels, probs) = ensemble_soft_vote(&bundle.ensemble, &x)
        .map_err(|e| PipelineError::model(psg.display().to_string(), e))?;
    let classes = bundle.ensemble.classes();
    Ok(labels
        .into_iter()
        .zip(probs)
        .enumerate()
        .map(|(i, (stage, p))| {
            let mut full = [0.0; 5];
            for (c, v) in classes.iter().zip(p) {
                full[c.code() as usize] = v;
            }
            ScoredEpoch {
                epoch: i,
                onset_s: i as f64 * EPOCH_SECONDS,
                stage,
                probs: full,
            }
        })
        .collect())
}

pub fn write_score_csv<W: Write>(mut w: W, rows: &[ScoredEpoch]) -> std::io::Result<()> {
    let header: Vec<String> = SleepStage::SCORED
        .iter()
        .map(|s| format!("p_{s}"))
        .collect();
    writeln!(w, "epoch,onset_s,stage,{}", header.join(","))?;
    for r in rows {
        let p: Vec<String> = r.probs.iter().map(|v| format!("{v:.6}")).collect();
        writeln!(w, "{},{},{},{}", r.epoch, r.onset_s, r.stage, p.join(","))?;
    }
    Ok(())
}

/// Step-plot hypnogram: one polyline with a horizontal segment per run of
/// equal stages, so it has `2 · (transitions + 1)` vertices.
pub fn hypnogram_svg(stages: &[SleepStage], title: &str) -> String {
    const LEFT: f64 = 60.0;
    const TOP: f64 = 30.0;
    const ROW: f64 = 30.0;
    const WIDTH: f64 = 900.0;
    let n = stages.len().max(1) as f64;
    let x = |epoch: usize| LEFT + WIDTH * epoch as f64 / n;
    let y = |s: SleepStage| {
        let row = STAGE_AXIS
            .iter()
            .position(|a| *a == s)
            .unwrap_or(STAGE_AXIS.len());
        TOP + ROW * row as f64
    };
    let height = TOP + ROW * STAGE_AXIS.len() as f64 + 30.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" viewBox="0 0 {} {height}">"#,
        LEFT + WIDTH + 20.0,
        LEFT + WIDTH + 20.0
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    for st in STAGE_AXIS {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="end">{st}</text>"#,
            LEFT - 8.0,
            y(st) + 4.0
        );
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{0}" x2="{1}" y2="{0}" stroke="#ddd"/>"##,
            y(st),
            LEFT + WIDTH
        );
    }
    let hours = stages.len() as f64 * EPOCH_SECONDS / 3600.0;
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">time (h), {hours:.2} h total</text>"#,
        LEFT + WIDTH / 2.0,
        height - 8.0
    );
    let mut points = Vec::new();
    let mut start = 0;
    for i in 1..=stages.len() {
        if i == stages.len() || stages[i] != stages[start] {
            let yy = y(stages[start]);
            points.push(format!("{:.2},{yy:.2}", x(start)));
            points.push(format!("{:.2},{yy:.2}", x(i)));
            start = i;
        }
    }
    let _ = writeln!(
        s,
        r#"<polyline fill="none" stroke="black" stroke-width="1.5" points="{}"/>"#,
        points.join(" ")
    );
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use SleepStage::*;

    #[test]
    fn svg_vertices_track_transitions() {
        let stages = [W, W, N1, N2, N2, N3, N2, Rem, Rem, W];
        let svg = hypnogram_svg(&stages, "t");
        assert_eq!(svg.matches("<polyline").count(), 1);
        let pts = svg
            .split("points=\"")
            .nth(1)
            .unwrap()
            .split('"')
            .next()
            .unwrap();
        let transitions = stages.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(pts.split(' ').count(), 2 * (transitions + 1));
        // W on top, N3 at the bottom
        let y_of = |s| TOP_Y(s);
        assert!(y_of(W) < y_of(Rem) && y_of(Rem) < y_of(N1) && y_of(N2) < y_of(N3));
    }

    #[allow(non_snake_case)]
    fn TOP_Y(s: SleepStage) -> usize {
        STAGE_AXIS.iter().position(|a| *a == s).unwrap()
    }

    #[test]
    fn empty_svg_has_empty_polyline() {
        let svg = hypnogram_svg(&[], "none");
        assert!(svg.contains(r#"points="""#));
    }

    #[test]
    fn csv_layout() {
        let mut out = Vec::new();
        let rows = vec![ScoredEpoch {
            epoch: 0,
            onset_s: 0.0,
            stage: N2,
            probs: [0.1, 0.1, 0.6, 0.1, 0.1],
        }];
        write_score_csv(&mut out, &rows).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "epoch,onset_s,stage,p_W,p_N1,p_N2,p_N3,p_REM\n0,0,N2,0.100000,0.100000,0.600000,0.100000,0.100000\n"
        );
    }
}
