//! One-day-ahead prediction: sample who shows up and how, play the game to
//! equilibrium, and compare against simple forecasters.

pub mod arima;
pub mod baseline;
pub mod presence;
pub mod rolling;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::equilibrium::{solve_nash, SolverParams};
use crate::game::{GameConfig, GameError, Role, ThetaVector, VoteProfile};
use crate::stats::{mean_std, split_seed};

pub use arima::{fit_arima, forecast_arima, ArimaError, ArimaModel, FitMethod};
pub use baseline::{baseline_constant, baseline_persistent, evaluate_mse, Forecast, ModelKind, MseError, MseTable};
pub use presence::{fit_presence, PresenceEntry, PresenceModel};
pub use rolling::{rolling_forecast, rolling_forecast_with, score_implemented, score_votes, daily_truth, DayForecast, DayTruth, FixedTheta, RollingConfig, RollingReport, VoteForecast};

/// Presence redraws allowed per sample before giving up on an empty round.
pub const MAX_REDRAWS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictError {
    #[error("sample_count must be at least 1")]
    NoSamples,
    #[error("theta has {got} entries for {expected} occupants")]
    ThetaLength { expected: usize, got: usize },
    #[error("sample {sample}: no occupant present after {MAX_REDRAWS} redraws")]
    NoParticipants { sample: usize },
    #[error("no default level recorded for {0}")]
    MissingDefault(chrono::NaiveDate),
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error(transparent)]
    Mse(#[from] MseError),
    #[error(transparent)]
    Game(#[from] GameError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub samples: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; 0 with a single sample.
    pub std: f64,
}

impl TargetSummary {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&samples);
        Self { samples, mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionDistribution {
    pub sample_count: usize,
    pub seed: u64,
    pub implemented: TargetSummary,
    /// Indexed by occupant, over the samples where the occupant took part;
    /// `None` if it never did.
    pub occupants: Vec<Option<TargetSummary>>,
    /// Sampled roles, one vector per sample.
    pub roles: Vec<Vec<Role>>,
    /// Samples whose solver hit the iteration cap.
    pub unconverged: usize,
}

struct Sample {
    roles: Vec<Role>,
    votes: Vec<f64>,
    implemented: f64,
    converged: bool,
}

/// Samples `sample_count` days. In each, every occupant's state is drawn
/// independently; default occupants vote `default_level`, active ones start
/// from the projection of `default_level` and move to the equilibrium with
/// the default votes held fixed. Sample `k` draws from its own stream derived
/// from `(seed, k)`, so the result does not depend on scheduling.
pub fn predict_day(
    presence: &PresenceModel,
    theta: &[f64],
    default_level: f64,
    cfg: &GameConfig,
    params: &SolverParams,
    sample_count: usize,
    seed: u64,
) -> Result<PredictionDistribution, PredictError> {
    if sample_count == 0 {
        return Err(PredictError::NoSamples);
    }
    let n = presence.entries.len();
    if theta.len() != n {
        return Err(PredictError::ThetaLength {
            expected: n,
            got: theta.len(),
        });
    }
    cfg.validate()?;
    params.validate()?;
    let theta = ThetaVector::new(theta.to_vec())?;
    let start = cfg.project(default_level);

    let samples: Vec<Sample> = (0..sample_count)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, &[k as u64]));
            let mut roles = presence.sample_roles(&mut rng);
            let mut redraws = 0;
            while !roles.iter().any(|r| r.participates()) {
                if redraws == MAX_REDRAWS {
                    return Err(PredictError::NoParticipants { sample: k });
                }
                roles = presence.sample_roles(&mut rng);
                redraws += 1;
            }
            let votes: Vec<f64> = roles
                .iter()
                .map(|r| match r {
                    Role::Active => start,
                    _ => default_level,
                })
                .collect();
            let init = VoteProfile::new(votes, roles.clone())?;
            let (votes, converged) = if roles.contains(&Role::Active) {
                let res = solve_nash(&theta, &init, cfg, params)?;
                (res.profile.votes, res.converged)
            } else {
                (init.votes, true)
            };
            let (count, total) = roles
                .iter()
                .zip(&votes)
                .filter(|(r, _)| r.participates())
                .fold((0usize, 0.0), |(c, s), (_, v)| (c + 1, s + v));
            Ok(Sample {
                roles,
                votes,
                implemented: total / count as f64,
                converged,
            })
        })
        .collect::<Result<_, PredictError>>()?;

    let occupants = (0..n)
        .map(|i| {
            let votes: Vec<f64> = samples
                .iter()
                .filter(|s| s.roles[i].participates())
                .map(|s| s.votes[i])
                .collect();
            (!votes.is_empty()).then(|| TargetSummary::from_samples(votes))
        })
        .collect();
    Ok(PredictionDistribution {
        sample_count,
        seed,
        implemented: TargetSummary::from_samples(samples.iter().map(|s| s.implemented).collect()),
        occupants,
        unconverged: samples.iter().filter(|s| !s.converged).count(),
        roles: samples.into_iter().map(|s| s.roles).collect(),
    })
}
