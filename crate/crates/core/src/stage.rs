//! AASM sleep stage taxonomy.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One 30 s scoring label. R&K stages 3 and 4 both map to [`SleepStage::N3`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SleepStage {
    W,
    N1,
    N2,
    N3,
    #[serde(rename = "REM")]
    Rem,
    Excluded,
}

impl SleepStage {
    /// The five scored classes in canonical order. Argmax ties resolve toward
    /// the earlier entry.
    pub const SCORED: [SleepStage; 5] = [
        SleepStage::W,
        SleepStage::N1,
        SleepStage::N2,
        SleepStage::N3,
        SleepStage::Rem,
    ];

    pub const ALL: [SleepStage; 6] = [
        SleepStage::W,
        SleepStage::N1,
        SleepStage::N2,
        SleepStage::N3,
        SleepStage::Rem,
        SleepStage::Excluded,
    ];

    /// Stable small-integer code used in binary caches and the C ABI.
    pub fn code(self) -> u8 {
        match self {
            SleepStage::W => 0,
            SleepStage::N1 => 1,
            SleepStage::N2 => 2,
            SleepStage::N3 => 3,
            SleepStage::Rem => 4,
            SleepStage::Excluded => 5,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn is_scored(self) -> bool {
        self != SleepStage::Excluded
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SleepStage::W => "W",
            SleepStage::N1 => "N1",
            SleepStage::N2 => "N2",
            SleepStage::N3 => "N3",
            SleepStage::Rem => "REM",
            SleepStage::Excluded => "Excluded",
        }
    }
}

impl fmt::Display for SleepStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown stage name {0:?}")]
pub struct ParseStageError(pub String);

impl FromStr for SleepStage {
    type Err = ParseStageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "W" => Ok(SleepStage::W),
            "N1" => Ok(SleepStage::N1),
            "N2" => Ok(SleepStage::N2),
            "N3" => Ok(SleepStage::N3),
            "REM" | "R" => Ok(SleepStage::Rem),
            "Excluded" => Ok(SleepStage::Excluded),
            other => Err(ParseStageError(other.to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_round_trip() {
        for s in SleepStage::ALL {
            assert_eq!(SleepStage::from_code(s.code()), Some(s));
            assert_eq!(s.as_str().parse::<SleepStage>().unwrap(), s);
        }
        assert_eq!(SleepStage::from_code(6), None);
    }

    #[test]
    fn scored_order_matches_tie_break_contract() {
        let mut sorted = SleepStage::SCORED;
        sorted.sort();
        assert_eq!(sorted, SleepStage::SCORED);
    }
}
