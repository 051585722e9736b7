//! Rolling one-day-ahead evaluation over an observation set.
//!
//! For every day after the first, the presence model and `θ` are refit on
//! the earlier days only, each region present in that day's data is
//! predicted, and the region predictions are averaged into a daily figure.
//! Two targets are scored: the implemented setting and each occupant's vote.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::arima::{fit_arima, forecast_arima, MIN_FIT_LEN};
use super::baseline::{baseline_constant, baseline_persistent, evaluate_mse, ModelKind, MseError, MseTable};
use super::presence::fit_presence;
use super::{predict_day, PredictError, PredictionDistribution};
use crate::equilibrium::SolverParams;
use crate::estimation::{
    estimate_strata, estimate_theta, EstimationOptions, OccupantTheta, StratumEstimate, StratumKey, Strata, ThetaEstimate,
};
use crate::game::{GameConfig, Role};
use crate::observation::{Observation, ObservationSet, Region};
use crate::pipeline::records::EstimateRecord;
use crate::stats::split_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RollingConfig {
    pub sample_count: usize,
    pub seed: u64,
    pub params: SolverParams,
    pub estimation: EstimationOptions,
    pub strata: Strata,
}

impl Default for RollingConfig {
    fn default() -> Self {
        Self {
            sample_count: 20,
            seed: 0,
            params: SolverParams::default(),
            estimation: EstimationOptions::default(),
            strata: Strata::PeriodRegion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteForecast {
    pub occupant: usize,
    pub truth: f64,
    pub nash: f64,
    pub constant: f64,
    pub persistent: f64,
    /// `None` until the occupant has enough history for a fit.
    pub arima: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayForecast {
    pub day: NaiveDate,
    pub default_level: f64,
    pub regions: Vec<Region>,
    pub truth: f64,
    pub nash: f64,
    /// Mean over regions of the per-region sample standard deviation.
    pub nash_std: f64,
    pub constant: f64,
    pub persistent: f64,
    pub arima: Option<f64>,
    pub votes: Vec<VoteForecast>,
    /// Sample distribution per region, aligned with `regions`.
    pub samples: Vec<PredictionDistribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingReport {
    pub days: Vec<DayForecast>,
    /// `None` when no day has a forecast from every model, as happens
    /// before ARIMA has enough history.
    pub implemented: Option<MseTable>,
    pub votes: Option<MseTable>,
}

/// Estimates held fixed over the whole evaluation instead of refit daily.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FixedTheta {
    pub strata: Vec<StratumEstimate>,
    pub pooled: ThetaEstimate,
}

impl FixedTheta {
    /// Regroups flat estimate rows by stratum. Rows for occupants outside
    /// `roster` and rows without an estimate are dropped; the row with no
    /// default level and no region is the pooled estimate.
    pub fn from_records(records: &[EstimateRecord], roster: &[String]) -> Self {
        let mut out = FixedTheta::default();
        for r in records {
            let (Some(theta_hat), Ok(occupant)) = (r.theta_hat, roster.binary_search(&r.occupant)) else {
                continue;
            };
            let entry = OccupantTheta {
                occupant,
                theta_hat,
                n_obs: r.n_obs,
                excluded: r.excluded,
                reliable: r.reliable,
                bootstrap: None,
            };
            let key = StratumKey {
                default_level: r.default_level,
                region: r.region,
            };
            if key == StratumKey::POOLED {
                out.pooled.entries.push(entry);
                continue;
            }
            match out.strata.iter_mut().find(|s| s.key == key) {
                Some(s) => s.estimate.entries.push(entry),
                None => out.strata.push(StratumEstimate {
                    key,
                    rounds: 0,
                    estimate: ThetaEstimate {
                        entries: vec![entry],
                        skipped: Vec::new(),
                    },
                }),
            }
        }
        out.pooled.entries.sort_by_key(|e| e.occupant);
        for s in &mut out.strata {
            s.estimate.entries.sort_by_key(|e| e.occupant);
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.pooled.entries.is_empty() && self.strata.iter().all(|s| s.estimate.entries.is_empty())
    }
}

/// `θ` per occupant for one stratum: the stratum's own reliable estimate,
/// else the pooled estimate, else the median of the pooled estimates, else 0.
pub fn resolve_theta(
    strata: &[StratumEstimate],
    pooled: &ThetaEstimate,
    key: StratumKey,
    occupants: usize,
) -> Vec<f64> {
    let cell = strata.iter().find(|s| s.key == key).map(|s| &s.estimate);
    let mut all: Vec<f64> = pooled.entries.iter().map(|e| e.theta_hat).collect();
    all.sort_by(f64::total_cmp);
    let median = match all.len() {
        0 => 0.0,
        m if m % 2 == 1 => all[m / 2],
        m => 0.5 * (all[m / 2 - 1] + all[m / 2]),
    };
    (0..occupants)
        .map(|i| {
            cell.and_then(|c| c.get(i))
                .filter(|e| e.reliable)
                .or_else(|| pooled.get(i))
                .map_or(median, |e| e.theta_hat)
        })
        .collect()
}

/// Daily state of each occupant: active if any round had an active vote,
/// default if it only appeared with defaults, absent otherwise.
fn daily_roles(rounds: &[&Observation], occupants: usize) -> Vec<Role> {
    (0..occupants)
        .map(|i| {
            let mut role = Role::Absent;
            for o in rounds {
                match o.profile.roles[i] {
                    Role::Active => return Role::Active,
                    Role::Default => role = Role::Default,
                    Role::Absent => {}
                }
            }
            role
        })
        .collect()
}

/// Per-region implemented settings and each participant's mean vote.
fn truth_of(rounds: &[&Observation], n: usize) -> Result<(Vec<f64>, Vec<Option<f64>>), PredictError> {
    let regions: Vec<f64> = rounds
        .iter()
        .map(|o| crate::game::implemented_setting(&o.profile))
        .collect::<Result<_, _>>()?;
    let votes = (0..n)
        .map(|i| {
            let v: Vec<f64> = rounds
                .iter()
                .filter(|o| o.profile.roles[i].participates())
                .map(|o| o.profile.votes[i])
                .collect();
            (!v.is_empty()).then(|| mean(&v))
        })
        .collect();
    Ok((regions, votes))
}

/// Observed daily targets, as scored by [`rolling_forecast`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayTruth {
    pub day: NaiveDate,
    /// Mean over the day's regions of the implemented setting.
    pub implemented: f64,
    /// Mean vote per occupant over the regions it took part in.
    pub votes: Vec<Option<f64>>,
}

pub fn daily_truth(set: &ObservationSet) -> Result<Vec<DayTruth>, PredictError> {
    let n = set.roster.len();
    set.days()
        .into_iter()
        .filter_map(|day| {
            let rounds: Vec<&Observation> = set
                .observations
                .iter()
                .filter(|o| o.day == day && o.profile.participant_count() > 0)
                .collect();
            if rounds.is_empty() {
                return None;
            }
            Some(truth_of(&rounds, n).map(|(regions, votes)| DayTruth {
                day,
                implemented: mean(&regions),
                votes,
            }))
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn arima_next(history: &[f64]) -> Option<f64> {
    if history.len() < MIN_FIT_LEN {
        return None;
    }
    fit_arima(history).ok().map(|m| forecast_arima(&m, history))
}

pub fn rolling_forecast(
    set: &ObservationSet,
    cfg: &GameConfig,
    rc: &RollingConfig,
) -> Result<RollingReport, PredictError> {
    rolling_forecast_with(set, cfg, rc, None)
}

/// [`rolling_forecast`], optionally with `θ` taken from `fixed` on every day.
/// The presence model is still refit on the days before each forecast.
pub fn rolling_forecast_with(
    set: &ObservationSet,
    cfg: &GameConfig,
    rc: &RollingConfig,
    fixed: Option<&FixedTheta>,
) -> Result<RollingReport, PredictError> {
    let n = set.roster.len();
    let days = set.days();
    let by_day: Vec<Vec<&Observation>> = days
        .iter()
        .map(|d| {
            set.observations
                .iter()
                .filter(|o| o.day == *d && o.profile.participant_count() > 0)
                .collect()
        })
        .collect();

    let mut presence_history: Vec<Vec<Role>> = vec![Vec::new(); n];
    let mut truth_history: Vec<f64> = Vec::new();
    let mut vote_history: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut out = Vec::new();

    for (t, day) in days.iter().enumerate() {
        let rounds = &by_day[t];
        let roles_today = daily_roles(rounds, n);
        let level = rounds
            .iter()
            .find_map(|o| o.default_level)
            .ok_or(PredictError::MissingDefault(*day))?;
        let (truth_regions, truth_votes) = truth_of(rounds, n)?;

        if t > 0 && !rounds.is_empty() {
            let presence = fit_presence(&presence_history);
            let refit;
            let (strata, pooled) = match fixed {
                Some(f) => (&f.strata, &f.pooled),
                None => {
                    let train: Vec<Observation> = set
                        .observations
                        .iter()
                        .filter(|o| o.day < *day)
                        .cloned()
                        .collect();
                    let pooled = estimate_theta(&train, cfg, &rc.estimation);
                    let strata = match rc.strata {
                        Strata::Pooled => Vec::new(),
                        Strata::PeriodRegion => estimate_strata(&train, cfg, &rc.estimation, rc.strata, None)
                            .map_err(|e| PredictError::Estimation(e.to_string()))?,
                    };
                    refit = (strata, pooled);
                    (&refit.0, &refit.1)
                }
            };

            let mut nash_regions = Vec::new();
            let mut std_regions = Vec::new();
            let mut nash_votes: Vec<Vec<f64>> = vec![Vec::new(); n];
            let mut samples = Vec::new();
            for o in rounds {
                let key = match rc.strata {
                    Strata::Pooled => StratumKey::POOLED,
                    Strata::PeriodRegion => StratumKey {
                        default_level: Some(level),
                        region: Some(o.region),
                    },
                };
                let theta = resolve_theta(strata, pooled, key, n);
                let seed = split_seed(rc.seed, &[t as u64, o.region as u64]);
                let dist = predict_day(&presence, &theta, level, cfg, &rc.params, rc.sample_count, seed)?;
                nash_regions.push(dist.implemented.mean);
                std_regions.push(dist.implemented.std);
                for i in 0..n {
                    if o.profile.roles[i].participates() {
                        let v = dist.occupants[i].as_ref().map_or(level, |s| s.mean);
                        nash_votes[i].push(v);
                    }
                }
                samples.push(dist);
            }

            let votes = (0..n)
                .filter_map(|i| {
                    let truth = truth_votes[i]?;
                    Some(VoteForecast {
                        occupant: i,
                        truth,
                        nash: mean(&nash_votes[i]),
                        constant: baseline_constant(level),
                        persistent: baseline_persistent(&vote_history[i], level).value,
                        arima: arima_next(&vote_history[i]),
                    })
                })
                .collect();
            out.push(DayForecast {
                day: *day,
                default_level: level,
                regions: rounds.iter().map(|o| o.region).collect(),
                truth: mean(&truth_regions),
                nash: mean(&nash_regions),
                nash_std: mean(&std_regions),
                constant: baseline_constant(level),
                persistent: baseline_persistent(&truth_history, level).value,
                arima: arima_next(&truth_history),
                votes,
                samples,
            });
        }

        for i in 0..n {
            presence_history[i].push(roles_today[i]);
            if let Some(v) = truth_votes[i] {
                vote_history[i].push(v);
            }
        }
        if !truth_regions.is_empty() {
            truth_history.push(mean(&truth_regions));
        }
    }

    let optional = |table: Result<MseTable, PredictError>| match table {
        Ok(t) => Ok(Some(t)),
        Err(PredictError::Mse(MseError::EmptyIndex)) => Ok(None),
        Err(e) => Err(e),
    };
    let implemented = optional(score_implemented(&out))?;
    let votes = optional(score_votes(&out))?;
    Ok(RollingReport {
        days: out,
        implemented,
        votes,
    })
}

/// MSE of the daily implemented setting against the `truth` fields of `days`.
pub fn score_implemented(days: &[DayForecast]) -> Result<MseTable, PredictError> {
    score(days.iter().map(|d| (d.truth, d.nash, d.constant, d.persistent, d.arima)))
}

/// MSE of individual daily votes against their `truth` fields.
pub fn score_votes(days: &[DayForecast]) -> Result<MseTable, PredictError> {
    score(
        days.iter()
            .flat_map(|d| d.votes.iter())
            .map(|v| (v.truth, v.nash, v.constant, v.persistent, v.arima)),
    )
}

fn score(rows: impl Iterator<Item = (f64, f64, f64, f64, Option<f64>)>) -> Result<MseTable, PredictError> {
    let rows: Vec<_> = rows.collect();
    let column = |f: &dyn Fn(&(f64, f64, f64, f64, Option<f64>)) -> Option<f64>| rows.iter().map(f).collect();
    let truth: Vec<Option<f64>> = column(&|r| Some(r.0));
    let predictions = vec![
        (ModelKind::Arima, column(&|r| r.4)),
        (ModelKind::Nash, column(&|r| Some(r.1))),
        (ModelKind::Constant, column(&|r| Some(r.2))),
        (ModelKind::Persistent, column(&|r| Some(r.3))),
    ];
    Ok(evaluate_mse(&predictions, &truth)?)
}
