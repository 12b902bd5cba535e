use serde::{Deserialize, Serialize};

use super::{AnnotationEvent, EdfError};
use crate::stage::SleepStage;

pub const EPOCH_SECONDS: f64 = 30.0;

// Tolerance for onset/duration arithmetic on decimal-text values.
const TIME_EPS: f64 = 1e-6;

/// Per-epoch stage sequence for one night.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypnogram {
    pub source: String,
    pub stages: Vec<SleepStage>,
    /// Events whose duration was not a whole number of epochs.
    pub floored_events: usize,
}

impl Hypnogram {
    pub fn epoch_len_s(&self) -> f64 {
        EPOCH_SECONDS
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }
}

/// Map a Sleep-EDF (R&K) annotation label to an AASM stage.
pub fn stage_from_label(label: &str) -> Result<SleepStage, EdfError> {
    match label {
        "Sleep stage W" => Ok(SleepStage::W),
        "Sleep stage 1" => Ok(SleepStage::N1),
        "Sleep stage 2" => Ok(SleepStage::N2),
        "Sleep stage 3" | "Sleep stage 4" => Ok(SleepStage::N3),
        "Sleep stage R" => Ok(SleepStage::Rem),
        "Sleep stage ?" | "Movement time" => Ok(SleepStage::Excluded),
        other => Err(EdfError::UnknownStageLabel(other.to_string())),
    }
}

/// Expand stage annotations into `floor(total_span_s / 30)` epoch labels.
///
/// Timekeeping events (empty label) are ignored. Epochs not covered by any
/// event are [`SleepStage::Excluded`]; events running past the span are
/// clipped.
pub fn expand_hypnogram(
    events: &[AnnotationEvent],
    total_span_s: f64,
    source: impl Into<String>,
) -> Result<Hypnogram, EdfError> {
    let n_epochs = (total_span_s / EPOCH_SECONDS + TIME_EPS).floor().max(0.0) as usize;
    let mut stages = vec![SleepStage::Excluded; n_epochs];

    let mut scored: Vec<&AnnotationEvent> = events.iter().filter(|e| !e.is_timekeeping()).collect();
    scored.sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s));

    let mut previous_end = f64::NEG_INFINITY;
    let mut floored = 0;
    for ev in scored {
        if ev.onset_s < previous_end - TIME_EPS {
            return Err(EdfError::OverlappingEvents {
                onset_s: ev.onset_s,
                previous_end_s: previous_end,
            });
        }
        previous_end = ev.end_s();
        let stage = stage_from_label(&ev.label)?;

        let exact = ev.duration_s / EPOCH_SECONDS;
        let count = (exact + TIME_EPS).floor() as usize;
        if (exact - count as f64).abs() > TIME_EPS {
            floored += 1;
        }
        let first = (ev.onset_s / EPOCH_SECONDS + TIME_EPS).floor().max(0.0) as usize;
        for slot in stages.iter_mut().skip(first).take(count) {
            *slot = stage;
        }
    }
    if floored > 0 {
        log::warn!(
            "{floored} annotation(s) had durations that are not a multiple of 30 s; floored"
        );
    }
    Ok(Hypnogram {
        source: source.into(),
        stages,
        floored_events: floored,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn ev(onset: f64, dur: f64, label: &str) -> AnnotationEvent {
        AnnotationEvent {
            onset_s: onset,
            duration_s: dur,
            label: label.into(),
        }
    }

    #[test]
    fn label_table() {
        let table = [
            ("Sleep stage W", SleepStage::W),
            ("Sleep stage 1", SleepStage::N1),
            ("Sleep stage 2", SleepStage::N2),
            ("Sleep stage 3", SleepStage::N3),
            ("Sleep stage 4", SleepStage::N3),
            ("Sleep stage R", SleepStage::Rem),
            ("Sleep stage ?", SleepStage::Excluded),
            ("Movement time", SleepStage::Excluded),
        ];
        for (label, stage) in table {
            assert_eq!(stage_from_label(label).unwrap(), stage, "{label}");
        }
        for bad in ["", "Sleep stage 5", "sleep stage W", "Lights off"] {
            assert!(matches!(
                stage_from_label(bad),
                Err(EdfError::UnknownStageLabel(_))
            ));
        }
    }

    #[test]
    fn single_wake_hour() {
        let h = expand_hypnogram(&[ev(0.0, 3600.0, "Sleep stage W")], 3600.0, "x").unwrap();
        assert_eq!(h.len(), 120);
        assert!(h.stages.iter().all(|&s| s == SleepStage::W));
    }

    #[test]
    fn empty_events_fill_excluded() {
        let h = expand_hypnogram(&[], 90.0, "x").unwrap();
        assert_eq!(h.stages, vec![SleepStage::Excluded; 3]);
    }

    #[test]
    fn overlap_rejected() {
        let r = expand_hypnogram(
            &[
                ev(0.0, 30.0, "Sleep stage W"),
                ev(15.0, 30.0, "Sleep stage 1"),
            ],
            60.0,
            "x",
        );
        assert!(matches!(r, Err(EdfError::OverlappingEvents { .. })));
    }

    #[test]
    fn non_multiple_durations_are_floored_and_counted() {
        let h = expand_hypnogram(
            &[
                ev(0.0, 45.0, "Sleep stage W"),
                ev(60.0, 30.0, "Sleep stage 2"),
            ],
            90.0,
            "x",
        )
        .unwrap();
        assert_eq!(
            h.stages,
            vec![SleepStage::W, SleepStage::Excluded, SleepStage::N2]
        );
        assert_eq!(h.floored_events, 1);
    }

    #[test]
    fn events_past_span_clipped_and_timekeeping_ignored() {
        let h = expand_hypnogram(
            &[
                ev(0.0, 0.0, ""),
                ev(0.0, 60.0, "Sleep stage 3"),
                ev(60.0, 9000.0, "Sleep stage ?"),
            ],
            120.0,
            "x",
        )
        .unwrap();
        assert_eq!(
            h.stages,
            vec![
                SleepStage::N3,
                SleepStage::N3,
                SleepStage::Excluded,
                SleepStage::Excluded
            ]
        );
    }

    proptest! {
        #[test]
        fn length_is_floor_of_span(span in 0.0f64..100_000.0, n in 0usize..20) {
            let events: Vec<_> = (0..n).map(|i| ev(i as f64 * 300.0, 300.0, "Sleep stage 2")).collect();
            let h = expand_hypnogram(&events, span, "p").unwrap();
            prop_assert_eq!(h.len(), (span / 30.0 + 1e-6).floor() as usize);
        }
    }
}
