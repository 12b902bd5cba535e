use serde::{Deserialize, Serialize};

use super::EdfError;

const DURATION_MARK: u8 = 0x15;
const FIELD_END: u8 = 0x14;
const TAL_END: u8 = 0x00;

/// One annotation decoded from a TAL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationEvent {
    pub onset_s: f64,
    pub duration_s: f64,
    pub label: String,
}

impl AnnotationEvent {
    pub fn end_s(&self) -> f64 {
        self.onset_s + self.duration_s
    }

    /// Timekeeping TALs carry an empty label.
    pub fn is_timekeeping(&self) -> bool {
        self.label.is_empty()
    }
}

/// Decode all TALs in one annotation-signal record.
///
/// Grammar: `[+-]onset [0x15 duration] 0x14 (label 0x14)* 0x00`, repeated,
/// followed by zero padding. A TAL with several labels yields one event per
/// label, all sharing onset and duration.
pub fn parse_tal_block(bytes: &[u8]) -> Result<Vec<AnnotationEvent>, EdfError> {
    let mut events = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        if bytes[pos] == TAL_END {
            pos += 1;
            continue;
        }
        let tal_start = pos;
        let malformed = |offset: usize, reason: &str| EdfError::MalformedTal {
            offset,
            reason: reason.to_string(),
        };

        let onset_end = bytes[pos..]
            .iter()
            .position(|&b| b == DURATION_MARK || b == FIELD_END || b == TAL_END)
            .map(|i| pos + i)
            .ok_or_else(|| malformed(tal_start, "onset not terminated"))?;
        let onset = parse_offset(&bytes[pos..onset_end], true)
            .ok_or_else(|| malformed(tal_start, "onset is not a signed decimal number"))?;
        pos = onset_end;

        let mut duration = 0.0;
        if bytes[pos] == DURATION_MARK {
            pos += 1;
            let dur_end = bytes[pos..]
                .iter()
                .position(|&b| b == FIELD_END || b == TAL_END)
                .map(|i| pos + i)
                .ok_or_else(|| malformed(pos, "duration not terminated"))?;
            duration = parse_offset(&bytes[pos..dur_end], false)
                .filter(|d| *d >= 0.0)
                .ok_or_else(|| malformed(pos, "duration is not a non-negative decimal number"))?;
            pos = dur_end;
        }
        if bytes[pos] != FIELD_END {
            return Err(malformed(pos, "missing 0x14 after onset"));
        }
        pos += 1;

        loop {
            match bytes.get(pos) {
                None => return Err(malformed(pos, "TAL missing 0x00 terminator")),
                Some(&TAL_END) => {
                    pos += 1;
                    break;
                }
                Some(_) => {
                    let end = bytes[pos..]
                        .iter()
                        .position(|&b| b == FIELD_END)
                        .map(|i| pos + i)
                        .ok_or_else(|| malformed(pos, "annotation missing 0x14 terminator"))?;
                    events.push(AnnotationEvent {
                        onset_s: onset,
                        duration_s: duration,
                        label: String::from_utf8_lossy(&bytes[pos..end]).into_owned(),
                    });
                    pos = end + 1;
                }
            }
        }
    }
    Ok(events)
}

fn parse_offset(raw: &[u8], signed: bool) -> Option<f64> {
    let text = std::str::from_utf8(raw).ok()?;
    if signed && !(text.starts_with('+') || text.starts_with('-')) {
        return None;
    }
    let digits = text.trim_start_matches(['+', '-']);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit() || b == b'.') {
        return None;
    }
    text.parse().ok()
}
