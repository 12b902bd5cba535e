//! Synthetic sleep-cassette style recordings for tests and offline demos.
//!
//! Each night is a cycle-structured hypnogram rendered into two EEG channels
//! with stage-typical rhythms (alpha in wake, theta in N1, spindles and
//! K-complexes in N2, delta in N3, sawtooth theta in REM) over AR(1)
//! background noise. Files follow the `SC4ssNE0-PSG.edf` /
//! `SC4ssNEC-Hypnogram.edf` naming so discovery treats them like the real
//! corpus. The signals are plausible, not physiological: accuracies measured
//! on them say nothing about real data.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::edf::{AnnotationEvent, EdfWriter, WriterSignal, EPOCH_SECONDS};
use crate::SleepStage;

pub const SYNTH_FS: f64 = 100.0;
pub const SYNTH_CHANNELS: [&str; 2] = ["EEG Fpz-Cz", "EEG Pz-Oz"];
const RANGE_UV: f64 = 500.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub subjects: usize,
    pub nights: usize,
    /// Sleep cycles per night (each roughly 60–100 min).
    pub cycles: usize,
    /// Truncate every night to this many epochs.
    pub max_epochs: Option<usize>,
    /// Per-epoch probability of a high-amplitude artifact burst.
    pub artifact_rate: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            subjects: 10,
            nights: 1,
            cycles: 4,
            max_epochs: None,
            artifact_rate: 0.01,
            seed: 7,
        }
    }
}

/// One labelled epoch of the scoring truth; `label` is the annotation text.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthEpoch {
    pub stage: SleepStage,
    pub label: &'static str,
}

#[derive(Debug, Clone)]
pub struct SynthNight {
    pub epochs: Vec<SynthEpoch>,
    /// One sample vector per entry of [`SYNTH_CHANNELS`].
    pub channels: Vec<Vec<f64>>,
}

impl SynthNight {
    /// Run-length encoded annotation events.
    pub fn events(&self) -> Vec<AnnotationEvent> {
        let mut out: Vec<AnnotationEvent> = Vec::new();
        for (i, e) in self.epochs.iter().enumerate() {
            match out.last_mut() {
                Some(last) if last.label == e.label => last.duration_s += EPOCH_SECONDS,
                _ => out.push(AnnotationEvent {
                    onset_s: i as f64 * EPOCH_SECONDS,
                    duration_s: EPOCH_SECONDS,
                    label: e.label.to_string(),
                }),
            }
        }
        out
    }
}

fn push(seq: &mut Vec<SynthEpoch>, stage: SleepStage, n: usize) {
    let label = match stage {
        SleepStage::W => "Sleep stage W",
        SleepStage::N1 => "Sleep stage 1",
        SleepStage::N2 => "Sleep stage 2",
        SleepStage::N3 => "Sleep stage 3",
        SleepStage::Rem => "Sleep stage R",
        SleepStage::Excluded => "Sleep stage ?",
    };
    seq.extend(std::iter::repeat_with(|| SynthEpoch { stage, label }).take(n));
}

fn hypnogram(rng: &mut ChaCha8Rng, cycles: usize) -> Vec<SynthEpoch> {
    let mut seq = Vec::new();
    push(&mut seq, SleepStage::W, rng.gen_range(40..90));
    for c in 0..cycles {
        push(&mut seq, SleepStage::N1, rng.gen_range(3..12));
        push(&mut seq, SleepStage::N2, rng.gen_range(20..40));
        let deep = match c {
            0 => rng.gen_range(40..60),
            1 => rng.gen_range(20..40),
            _ => rng.gen_range(0..15),
        };
        let n3_start = seq.len();
        push(&mut seq, SleepStage::N3, deep);
        // the deepest stretch is scored as R&K stage 4
        for e in seq[n3_start + deep / 3..n3_start + 2 * deep / 3].iter_mut() {
            e.label = "Sleep stage 4";
        }
        push(&mut seq, SleepStage::N2, rng.gen_range(10..30));
        push(&mut seq, SleepStage::Rem, 8 + 8 * c + rng.gen_range(0..12));
        if rng.gen_bool(0.4) {
            push(&mut seq, SleepStage::W, rng.gen_range(1..5));
            push(&mut seq, SleepStage::N1, rng.gen_range(1..4));
        }
    }
    push(&mut seq, SleepStage::W, rng.gen_range(30..90));
    for e in seq.iter_mut() {
        if e.stage != SleepStage::W && rng.gen_bool(0.005) {
            *e = SynthEpoch {
                stage: SleepStage::Excluded,
                label: "Movement time",
            };
        }
    }
    push(&mut seq, SleepStage::Excluded, 2);
    seq
}

/// Per-subject rhythm parameters.
struct Physiology {
    scale: f64,
    alpha_hz: f64,
    spindle_hz: f64,
    delta_gain: f64,
    noise: f64,
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Stage that a transitional epoch is partly drawn from.
fn confuser(rng: &mut ChaCha8Rng, stage: SleepStage) -> SleepStage {
    use SleepStage::*;
    match stage {
        W => N1,
        N1 => [W, Rem, N2][rng.gen_range(0..3)],
        N2 => [N1, N3][rng.gen_range(0..2)],
        N3 => N2,
        Rem => [N1, W][rng.gen_range(0..2)],
        Excluded => W,
    }
}

/// Adds `weight` × the stage's rhythms to `out` (before subject scaling).
fn render_epoch(
    rng: &mut ChaCha8Rng,
    stage: SleepStage,
    p: &Physiology,
    channel: usize,
    weight: f64,
    out: &mut [f64],
) {
    let n = out.len();
    let t = |i: usize| i as f64 / SYNTH_FS;
    let jitter = weight * (0.75 + 0.5 * rng.gen::<f64>());
    let eyes_closed = rng.gen_bool(0.7);
    let mut add_osc = |out: &mut [f64], f: f64, amp: f64| {
        let ph = rng.gen::<f64>() * 2.0 * PI;
        for (i, v) in out.iter_mut().enumerate() {
            *v += weight * amp * (2.0 * PI * f * t(i) + ph).sin();
        }
    };
    // posterior channel carries more alpha, frontal more delta
    let (alpha_w, delta_w) = if channel == 0 { (0.7, 1.0) } else { (1.3, 0.7) };
    match stage {
        SleepStage::W => {
            if eyes_closed {
                add_osc(out, p.alpha_hz, 18.0 * alpha_w * jitter);
            }
            add_osc(out, 19.0 + 4.0 * (p.alpha_hz - 10.0), 7.0);
            add_osc(out, 0.4, 15.0 * jitter);
        }
        SleepStage::N1 => {
            add_osc(out, 5.5, 16.0 * jitter);
            add_osc(out, 4.0, 10.0);
            add_osc(out, p.alpha_hz, 6.0 * alpha_w);
        }
        SleepStage::N2 => {
            add_osc(out, 5.0, 12.0 * jitter);
            add_osc(out, 1.5, 10.0 * delta_w);
        }
        SleepStage::N3 => {
            add_osc(out, 0.8, 45.0 * p.delta_gain * delta_w * jitter);
            add_osc(out, 1.6, 30.0 * p.delta_gain * delta_w);
            add_osc(out, 5.0, 6.0);
        }
        SleepStage::Rem => {
            add_osc(out, 6.0, 8.0);
            add_osc(out, 22.0, 5.0);
        }
        SleepStage::Excluded => add_osc(out, 0.3, 30.0),
    }
    let duration = n as f64 / SYNTH_FS;
    if stage == SleepStage::N2 {
        for _ in 0..rng.gen_range(0..5) {
            let c = rng.gen::<f64>() * duration;
            let w = 0.25 + 0.3 * rng.gen::<f64>();
            let ph = rng.gen::<f64>() * 2.0 * PI;
            for (i, v) in out.iter_mut().enumerate() {
                let env = (-((t(i) - c) / w).powi(2)).exp();
                *v += weight * 25.0 * env * (2.0 * PI * p.spindle_hz * t(i) + ph).sin();
            }
        }
        for _ in 0..rng.gen_range(0..3) {
            let c = 1.0 + rng.gen::<f64>() * (duration - 2.0);
            for (i, v) in out.iter_mut().enumerate() {
                let x = t(i) - c;
                *v += weight
                    * (-70.0 * (-(x / 0.15).powi(2)).exp()
                        + 40.0 * (-((x - 0.45) / 0.25).powi(2)).exp());
            }
        }
    }
    if stage == SleepStage::Rem {
        for _ in 0..rng.gen_range(1..4) {
            let start = rng.gen::<f64>() * (duration - 3.0);
            let len = 1.0 + 2.0 * rng.gen::<f64>();
            let f = 2.5 + 2.0 * rng.gen::<f64>();
            for (i, v) in out.iter_mut().enumerate() {
                let x = t(i) - start;
                if (0.0..len).contains(&x) {
                    *v += weight * 20.0 * (2.0 * (f * x).fract() - 1.0);
                }
            }
        }
    }
}

/// Render one night. Deterministic in `(params.seed, subject, night)`.
pub fn synth_night(params: &SynthParams, subject: usize, night: usize) -> SynthNight {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream((subject * 16 + night) as u64);
    let phys = Physiology {
        scale: 0.75 + 0.5 * rng.gen::<f64>(),
        alpha_hz: 9.0 + 2.0 * rng.gen::<f64>(),
        spindle_hz: 12.0 + 2.0 * rng.gen::<f64>(),
        delta_gain: 0.8 + 0.4 * rng.gen::<f64>(),
        noise: 1.5 + 2.5 * rng.gen::<f64>(),
    };
    let mut epochs = hypnogram(&mut rng, params.cycles);
    if let Some(m) = params.max_epochs {
        epochs.truncate(m);
    }
    let per_epoch = (SYNTH_FS * EPOCH_SECONDS) as usize;
    let channels = (0..SYNTH_CHANNELS.len())
        .map(|ch| {
            let mut xs = vec![0.0; epochs.len() * per_epoch];
            let mut ar = 0.0;
            for v in xs.iter_mut() {
                ar = 0.95 * ar + phys.noise * gauss(&mut rng);
                *v = ar;
            }
            for (e, chunk) in epochs.iter().zip(xs.chunks_mut(per_epoch)) {
                // transitional epochs mix in a neighbouring stage
                let a = 0.45 + 0.55 * rng.gen::<f64>();
                render_epoch(&mut rng, e.stage, &phys, ch, a, chunk);
                let other = confuser(&mut rng, e.stage);
                render_epoch(&mut rng, other, &phys, ch, 1.0 - a, chunk);
                chunk.iter_mut().for_each(|v| *v *= phys.scale);
                if rng.gen_bool(params.artifact_rate) {
                    let at = rng.gen_range(0..per_epoch - 50);
                    let amp = if rng.gen_bool(0.5) { 420.0 } else { -420.0 };
                    for (k, v) in chunk[at..at + 50].iter_mut().enumerate() {
                        *v += amp * (PI * k as f64 / 50.0).sin();
                    }
                }
            }
            xs.iter().map(|v| v.clamp(-RANGE_UV, RANGE_UV)).collect()
        })
        .collect();
    SynthNight { epochs, channels }
}

pub fn recording_stem(subject: usize, night: usize) -> String {
    format!("SC4{subject:02}{}", night + 1)
}

/// Write PSG and hypnogram files; returns the PSG paths in order.
pub fn write_dataset(dir: &Path, params: &SynthParams) -> Result<Vec<PathBuf>, PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
    let mut out = Vec::new();
    for s in 0..params.subjects {
        for n in 0..params.nights {
            let night = synth_night(params, s, n);
            let stem = recording_stem(s, n);
            let psg = dir.join(format!("{stem}E0-PSG.edf"));
            let hyp = dir.join(format!("{stem}EC-Hypnogram.edf"));
            let mut w = EdfWriter::new(&format!("X {stem}"), "Startdate synthetic");
            for label in SYNTH_CHANNELS {
                w.add_signal(WriterSignal::eeg(
                    label,
                    RANGE_UV,
                    (SYNTH_FS * EPOCH_SECONDS) as usize,
                ));
            }
            w.write_physical(&psg, EPOCH_SECONDS, &night.channels)
                .map_err(|e| PipelineError::edf(&psg, e))?;
            let bytes = EdfWriter::new(&format!("X {stem}"), "Startdate synthetic")
                .annotation_bytes(&night.events());
            std::fs::write(&hyp, bytes).map_err(|e| PipelineError::io(&hyp, e))?;
            out.push(psg);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edf::{discover_recordings, expand_hypnogram, EdfFile};

    #[test]
    fn deterministic_and_structured() {
        let p = SynthParams {
            cycles: 2,
            ..SynthParams::default()
        };
        let a = synth_night(&p, 3, 0);
        let b = synth_night(&p, 3, 0);
        assert_eq!(a.channels, b.channels);
        let c = synth_night(&p, 4, 0);
        assert_ne!(a.channels[0], c.channels[0]);
        for s in SleepStage::SCORED {
            assert!(a.epochs.iter().any(|e| e.stage == s), "{s} missing");
        }
        assert!(a.epochs.iter().any(|e| e.label == "Sleep stage 4"));
        let ev = a.events();
        assert!(ev.windows(2).all(|w| w[0].label != w[1].label));
        let total: f64 = ev.iter().map(|e| e.duration_s).sum();
        assert_eq!(total, a.epochs.len() as f64 * 30.0);
    }

    #[test]
    fn files_round_trip_through_reader() {
        let dir = tempfile::tempdir().unwrap();
        let p = SynthParams {
            subjects: 2,
            cycles: 1,
            max_epochs: Some(40),
            ..SynthParams::default()
        };
        write_dataset(dir.path(), &p).unwrap();
        let pairs = discover_recordings(dir.path()).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].subject, "SC400");
        let mut psg = EdfFile::open(&pairs[0].psg).unwrap();
        let trace = psg.read_signal("EEG Fpz-Cz").unwrap();
        assert_eq!(trace.fs, 100.0);
        assert_eq!(trace.samples.len(), 40 * 3000);
        let mut hyp = EdfFile::open(&pairs[0].hypnogram).unwrap();
        let h = expand_hypnogram(&hyp.read_annotations().unwrap(), psg.span_s(), "h").unwrap();
        let truth = synth_night(&p, 0, 0);
        let expect: Vec<SleepStage> = truth.epochs.iter().map(|e| e.stage).collect();
        assert_eq!(h.stages, expect);
    }
}
