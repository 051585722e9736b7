//! Default-level schedule and tagging of observations with it.

use std::io::Read;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::observation::ObservationSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefaultPeriod {
    pub start: NaiveDate,
    /// Inclusive.
    pub end: NaiveDate,
    pub default_level: f64,
}

/// Contiguous, non-overlapping default periods in date order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefaultSchedule {
    periods: Vec<DefaultPeriod>,
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

impl DefaultSchedule {
    pub fn new(mut periods: Vec<DefaultPeriod>) -> Result<Self, PipelineError> {
        if periods.is_empty() {
            return Err(PipelineError::Schedule("no periods".into()));
        }
        periods.sort_by_key(|p| p.start);
        for p in &periods {
            if p.end < p.start {
                return Err(PipelineError::Schedule(format!("period {} ends before it starts", p.start)));
            }
            if !(0.0..=100.0).contains(&p.default_level) {
                return Err(PipelineError::Schedule(format!(
                    "default level {} outside [0, 100]",
                    p.default_level
                )));
            }
        }
        for w in periods.windows(2) {
            if w[1].start != w[0].end + Duration::days(1) {
                return Err(PipelineError::Schedule(format!(
                    "periods ending {} and starting {} are not contiguous",
                    w[0].end, w[1].start
                )));
            }
        }
        Ok(Self { periods })
    }

    /// The 2014 study schedule: defaults of 20, 10, 60 and 90 percent.
    pub fn study_2014() -> Self {
        let p = |s: (u32, u32), e: (u32, u32), level| DefaultPeriod {
            start: ymd(2014, s.0, s.1),
            end: ymd(2014, e.0, e.1),
            default_level: level,
        };
        Self::new(vec![
            p((3, 3), (4, 10), 20.0),
            p((4, 11), (5, 1), 10.0),
            p((5, 2), (5, 23), 60.0),
            p((5, 24), (6, 5), 90.0),
        ])
        .expect("static schedule is valid")
    }

    /// Reads a `start,end,default_level` CSV with ISO dates.
    pub fn from_csv(reader: impl Read) -> Result<Self, PipelineError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut periods = Vec::new();
        for row in rdr.deserialize::<DefaultPeriod>() {
            periods.push(row.map_err(|e| PipelineError::Schedule(e.to_string()))?);
        }
        Self::new(periods)
    }

    pub fn periods(&self) -> &[DefaultPeriod] {
        &self.periods
    }

    pub fn period_of(&self, day: NaiveDate) -> Option<&DefaultPeriod> {
        self.periods.iter().find(|p| p.start <= day && day <= p.end)
    }

    pub fn level_on(&self, day: NaiveDate) -> Option<f64> {
        self.period_of(day).map(|p| p.default_level)
    }
}

/// Tags every observation with its period's default level. Fails listing
/// each uncovered date if any observation falls outside the schedule.
pub fn segment_default_periods(
    set: &mut ObservationSet,
    schedule: &DefaultSchedule,
) -> Result<(), PipelineError> {
    let mut uncovered: Vec<NaiveDate> = set
        .observations
        .iter()
        .filter(|o| schedule.level_on(o.day).is_none())
        .map(|o| o.day)
        .collect();
    uncovered.dedup();
    if !uncovered.is_empty() {
        return Err(PipelineError::UncoveredDates(uncovered));
    }
    for o in &mut set.observations {
        o.default_level = schedule.level_on(o.day);
    }
    Ok(())
}
