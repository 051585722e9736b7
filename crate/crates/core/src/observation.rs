//! Binned vote snapshots: one game round per (day, region of the day).

use chrono::{NaiveDate, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::game::VoteProfile;

/// Part of the day with roughly constant outside light.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    /// 05:00–10:00
    Dawn,
    /// 10:00–17:00
    Daylight,
    /// 17:00–20:00
    Dusk,
    /// 20:00–05:00 the next morning
    Night,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::Dawn, Region::Daylight, Region::Dusk, Region::Night];

    /// Region of a local wall-clock time. Intervals are half-open on the right.
    pub fn of_time(t: NaiveTime) -> Region {
        match t.hour() {
            5..=9 => Region::Dawn,
            10..=16 => Region::Daylight,
            17..=19 => Region::Dusk,
            _ => Region::Night,
        }
    }

    /// Single-letter column label used in reports (A–D).
    pub fn letter(self) -> char {
        match self {
            Region::Dawn => 'A',
            Region::Daylight => 'B',
            Region::Dusk => 'C',
            Region::Night => 'D',
        }
    }
}

impl std::fmt::Display for Region {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Region::Dawn => "dawn",
            Region::Daylight => "daylight",
            Region::Dusk => "dusk",
            Region::Night => "night",
        })
    }
}

impl std::str::FromStr for Region {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dawn" | "a" => Ok(Region::Dawn),
            "daylight" | "b" => Ok(Region::Daylight),
            "dusk" | "c" => Ok(Region::Dusk),
            "night" | "d" => Ok(Region::Night),
            other => Err(format!("unknown region '{other}'")),
        }
    }
}

/// One round: every occupant's averaged vote in a (day, region) window.
/// `profile` is indexed by position in the enclosing roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub day: NaiveDate,
    pub region: Region,
    /// Default level in force that day, once periods have been applied.
    pub default_level: Option<f64>,
    pub profile: VoteProfile,
    /// Raw vote records folded into this round.
    pub record_count: usize,
}

/// Observations sharing an occupant roster.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationSet {
    /// Occupant ids, sorted; profile index `i` refers to `roster[i]`.
    pub roster: Vec<String>,
    pub observations: Vec<Observation>,
}

impl ObservationSet {
    pub fn occupant_index(&self, id: &str) -> Option<usize> {
        self.roster.binary_search_by(|r| r.as_str().cmp(id)).ok()
    }

    pub fn days(&self) -> Vec<NaiveDate> {
        let mut days: Vec<NaiveDate> = self.observations.iter().map(|o| o.day).collect();
        days.dedup();
        days.sort();
        days.dedup();
        days
    }
}
