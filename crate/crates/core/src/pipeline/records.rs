//! Line-delimited JSON files: one record per line, fields in a fixed order.
//!
//! Observation lines look like
//!
//! ```text
//! {"day":"2014-03-03","region":"daylight","default_level":20.0,"record_count":2,
//!  "votes":[{"occupant":"a","role":"active","vote":50.0}]}
//! ```
//!
//! (on one line); only participating occupants are listed.

use std::io::{BufRead, Write};

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::estimation::StratumEstimate;
use crate::game::{Role, VoteProfile};
use crate::observation::{Observation, ObservationSet, Region};

pub fn write_jsonl<T: Serialize>(mut out: impl Write, items: &[T]) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(input: impl BufRead) -> Result<Vec<T>, PipelineError> {
    let mut out = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line.map_err(|e| PipelineError::Record {
            line: k + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PipelineError::Record {
            line: k + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedVote {
    pub occupant: String,
    pub role: Role,
    pub vote: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub day: NaiveDate,
    pub region: Region,
    pub default_level: Option<f64>,
    pub record_count: usize,
    pub votes: Vec<ObservedVote>,
}

pub fn observation_records(set: &ObservationSet) -> Vec<ObservationRecord> {
    set.observations
        .iter()
        .map(|o| ObservationRecord {
            day: o.day,
            region: o.region,
            default_level: o.default_level,
            record_count: o.record_count,
            votes: o
                .profile
                .participants()
                .map(|i| ObservedVote {
                    occupant: set.roster[i].clone(),
                    role: o.profile.roles[i],
                    vote: o.profile.votes[i],
                })
                .collect(),
        })
        .collect()
}

/// Rebuilds a set whose roster is the sorted union of listed occupants.
pub fn observations_from_records(records: &[ObservationRecord]) -> ObservationSet {
    let mut roster: Vec<String> = records
        .iter()
        .flat_map(|r| r.votes.iter().map(|v| v.occupant.clone()))
        .collect();
    roster.sort();
    roster.dedup();
    let observations = records
        .iter()
        .map(|r| {
            let mut votes = vec![0.0; roster.len()];
            let mut roles = vec![Role::Absent; roster.len()];
            for v in &r.votes {
                let i = roster.binary_search(&v.occupant).expect("in roster");
                votes[i] = v.vote;
                roles[i] = v.role;
            }
            Observation {
                day: r.day,
                region: r.region,
                default_level: r.default_level,
                profile: VoteProfile { votes, roles },
                record_count: r.record_count,
            }
        })
        .collect();
    ObservationSet { roster, observations }
}

/// One occupant's estimate within one stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub default_level: Option<f64>,
    pub region: Option<Region>,
    pub occupant: String,
    pub theta_hat: Option<f64>,
    pub boot_mean: Option<f64>,
    pub boot_std: Option<f64>,
    pub n_obs: usize,
    pub excluded: usize,
    pub reliable: bool,
    /// Why no estimate was produced, if none was.
    pub skipped: Option<String>,
}

pub fn estimate_records(strata: &[StratumEstimate], roster: &[String]) -> Vec<EstimateRecord> {
    let mut out = Vec::new();
    for s in strata {
        let mut rows: Vec<EstimateRecord> = s
            .estimate
            .entries
            .iter()
            .map(|e| EstimateRecord {
                default_level: s.key.default_level,
                region: s.key.region,
                occupant: roster[e.occupant].clone(),
                theta_hat: Some(e.theta_hat),
                boot_mean: e.bootstrap.map(|b| b.mean),
                boot_std: e.bootstrap.map(|b| b.std),
                n_obs: e.n_obs,
                excluded: e.excluded,
                reliable: e.reliable,
                skipped: None,
            })
            .collect();
        rows.extend(s.estimate.skipped.iter().filter(|k| {
            !matches!(k.reason, crate::estimation::EstimateError::InsufficientData { .. })
        }).map(|k| EstimateRecord {
            default_level: s.key.default_level,
            region: s.key.region,
            occupant: roster[k.occupant].clone(),
            theta_hat: None,
            boot_mean: None,
            boot_std: None,
            n_obs: 0,
            excluded: 0,
            reliable: false,
            skipped: Some(k.reason.to_string()),
        }));
        rows.sort_by(|a, b| a.occupant.cmp(&b.occupant));
        out.extend(rows);
    }
    out
}
