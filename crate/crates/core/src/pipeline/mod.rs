//! From raw vote logs to tagged observations, plus energy accounting.

pub mod binning;
pub mod energy;
pub mod ingest;
pub mod periods;
pub mod records;

use chrono::NaiveDate;
use thiserror::Error;

pub use binning::bin_day_regions;
pub use energy::{energy_savings, EnergyLedger, EnergyParams};
pub use ingest::{ingest_votes, VoteRecord};
pub use periods::{segment_default_periods, DefaultPeriod, DefaultSchedule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("vote log {0} is empty")]
    EmptyLog(String),
    #[error("bad header: {0}")]
    Header(String),
    #[error("{} malformed row(s); first: {}", .0.len(), .0[0])]
    Rows(Vec<ingest::RowError>),
    #[error("invalid default schedule: {0}")]
    Schedule(String),
    #[error("dates not covered by any default period: {}", fmt_dates(.0))]
    UncoveredDates(Vec<NaiveDate>),
    #[error("record line {line}: {message}")]
    Record { line: usize, message: String },
    #[error("energy accounting: {0}")]
    Energy(String),
}

fn fmt_dates(d: &[NaiveDate]) -> String {
    d.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
}
