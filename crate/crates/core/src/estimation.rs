//! Utility learning: recover each occupant's weight `θ_i` from observed
//! rounds by asking that the first-order condition `D_i f_i = 0` holds as
//! nearly as possible.
//!
//! For occupant `i` the residual over rounds is `Ψ_i + θ_i Φ_i`, with
//! `Ψ_i[k] = D_i ψ_i(x^(k))` and `Φ_i[k] = D_i φ_i(x^(k))`. Minimizing the
//! summed squared residuals subject to `θ ≥ 0` separates across occupants,
//! and each one-dimensional problem has the closed form
//! `θ̂_i = max(0, -⟨Ψ_i, Φ_i⟩ / ⟨Φ_i, Φ_i⟩)`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{comfort_partial, points_partial, GameConfig, Role, DENOMINATOR_TOL};
use crate::observation::{Observation, Region};
use crate::stats::{mean_std, split_seed};

/// `⟨Φ, Φ⟩` at or below this leaves `θ` undetermined.
pub const PHI_NORM_TOL: f64 = 1e-300;

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
pub enum EstimateError {
    #[error("occupant {occupant} has no usable votes")]
    InsufficientData { occupant: usize },
    #[error("occupant {occupant}: points-term column is zero, theta is indeterminate")]
    Indeterminate { occupant: usize },
    #[error("bootstrap needs at least 2 resamples, got {0}")]
    TooFewResamples(usize),
}

/// Residual columns for one occupant, one entry per usable round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualColumns {
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
    /// Rounds where the occupant voted actively but the vote was unusable
    /// (inside the log-domain margin or in a degenerate round).
    pub excluded: usize,
}

impl ResidualColumns {
    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }
}

/// Builds `(Ψ_i, Φ_i)` from the rounds in which occupant `i` cast a true
/// vote strictly below `x_b - δ`. Default votes never enter.
pub fn build_residual_columns(
    observations: &[Observation],
    occupant: usize,
    cfg: &GameConfig,
) -> Result<ResidualColumns, EstimateError> {
    let limit = cfg.baseline - cfg.margin;
    let mut cols = ResidualColumns {
        psi: Vec::new(),
        phi: Vec::new(),
        excluded: 0,
    };
    for obs in observations {
        let p = &obs.profile;
        if p.roles.get(occupant) != Some(&Role::Active) {
            continue;
        }
        let own = p.votes[occupant];
        let (mut n, mut sum) = (0.0, 0.0);
        for j in p.participants() {
            n += 1.0;
            sum += p.votes[j];
        }
        if !(own >= cfg.lower && own < limit) || n * cfg.baseline - sum <= DENOMINATOR_TOL {
            cols.excluded += 1;
            continue;
        }
        cols.psi.push(comfort_partial(own, n, sum));
        cols.phi.push(points_partial(own, n, sum, cfg.baseline));
    }
    if cols.is_empty() {
        return Err(EstimateError::InsufficientData { occupant });
    }
    Ok(cols)
}

/// `argmin_{θ ≥ 0} ‖Ψ + θ Φ‖²`.
pub fn nonnegative_theta(psi: &[f64], phi: &[f64]) -> Option<f64> {
    let cross: f64 = psi.iter().zip(phi).map(|(a, b)| a * b).sum();
    let norm: f64 = phi.iter().map(|b| b * b).sum();
    if norm <= PHI_NORM_TOL {
        return None;
    }
    Some((-cross / norm).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub mean: f64,
    pub std: f64,
    /// Resamples that produced a determinate `θ`.
    pub resamples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupantTheta {
    pub occupant: usize,
    pub theta_hat: f64,
    pub n_obs: usize,
    pub excluded: usize,
    /// False when `n_obs` is below the reliability threshold.
    pub reliable: bool,
    pub bootstrap: Option<BootstrapSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedOccupant {
    pub occupant: usize,
    pub reason: EstimateError,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub entries: Vec<OccupantTheta>,
    pub skipped: Vec<SkippedOccupant>,
}

impl ThetaEstimate {
    pub fn get(&self, occupant: usize) -> Option<&OccupantTheta> {
        self.entries.iter().find(|e| e.occupant == occupant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationOptions {
    /// Occupants with fewer usable rounds are flagged unreliable.
    pub min_reliable_obs: usize,
}

impl Default for EstimationOptions {
    fn default() -> Self {
        Self { min_reliable_obs: 3 }
    }
}

fn occupant_count(observations: &[Observation]) -> usize {
    observations.iter().map(|o| o.profile.len()).max().unwrap_or(0)
}

/// Point estimates for every occupant that voted in `observations`.
pub fn estimate_theta(
    observations: &[Observation],
    cfg: &GameConfig,
    opts: &EstimationOptions,
) -> ThetaEstimate {
    let mut out = ThetaEstimate::default();
    for occupant in 0..occupant_count(observations) {
        match fit_occupant(observations, occupant, cfg, opts) {
            Ok((entry, _)) => out.entries.push(entry),
            Err(reason) => out.skipped.push(SkippedOccupant { occupant, reason }),
        }
    }
    out
}

fn fit_occupant(
    observations: &[Observation],
    occupant: usize,
    cfg: &GameConfig,
    opts: &EstimationOptions,
) -> Result<(OccupantTheta, ResidualColumns), EstimateError> {
    let cols = build_residual_columns(observations, occupant, cfg)?;
    let theta_hat =
        nonnegative_theta(&cols.psi, &cols.phi).ok_or(EstimateError::Indeterminate { occupant })?;
    let entry = OccupantTheta {
        occupant,
        theta_hat,
        n_obs: cols.len(),
        excluded: cols.excluded,
        reliable: cols.len() >= opts.min_reliable_obs,
        bootstrap: None,
    };
    Ok((entry, cols))
}

/// Point estimates plus a with-replacement bootstrap of each occupant's
/// usable rounds (`resamples` draws of full size). Deterministic in `seed`;
/// each (occupant, resample) pair gets its own derived stream.
pub fn bootstrap_theta(
    observations: &[Observation],
    cfg: &GameConfig,
    opts: &EstimationOptions,
    resamples: usize,
    seed: u64,
) -> Result<ThetaEstimate, EstimateError> {
    if resamples < 2 {
        return Err(EstimateError::TooFewResamples(resamples));
    }
    let fitted: Vec<_> = (0..occupant_count(observations))
        .into_par_iter()
        .map(|occupant| {
            let (mut entry, cols) = fit_occupant(observations, occupant, cfg, opts)?;
            entry.bootstrap = Some(resample_occupant(&cols, occupant, resamples, seed));
            if cols.len() < 2 {
                entry.reliable = false;
            }
            Ok(entry)
        })
        .collect();
    let mut out = ThetaEstimate::default();
    for (occupant, r) in fitted.into_iter().enumerate() {
        match r {
            Ok(entry) => out.entries.push(entry),
            Err(reason) => out.skipped.push(SkippedOccupant { occupant, reason }),
        }
    }
    Ok(out)
}

fn resample_occupant(
    cols: &ResidualColumns,
    occupant: usize,
    resamples: usize,
    seed: u64,
) -> BootstrapSummary {
    let k = cols.len();
    let mut draws = Vec::with_capacity(resamples);
    let mut psi = vec![0.0; k];
    let mut phi = vec![0.0; k];
    for b in 0..resamples {
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, &[occupant as u64, b as u64]));
        for slot in 0..k {
            let pick = rng.random_range(0..k);
            psi[slot] = cols.psi[pick];
            phi[slot] = cols.phi[pick];
        }
        if let Some(t) = nonnegative_theta(&psi, &phi) {
            draws.push(t);
        }
    }
    let (mean, std) = mean_std(&draws);
    BootstrapSummary {
        mean,
        std: if k < 2 { 0.0 } else { std },
        resamples: draws.len(),
    }
}

/// How rounds are grouped before estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strata {
    /// One estimate per (default level, region) cell.
    PeriodRegion,
    /// All rounds together.
    Pooled,
}

impl std::str::FromStr for Strata {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "period-region" => Ok(Strata::PeriodRegion),
            "pooled" => Ok(Strata::Pooled),
            other => Err(format!("unknown strata mode '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratumKey {
    pub default_level: Option<f64>,
    pub region: Option<Region>,
}

impl StratumKey {
    pub const POOLED: StratumKey = StratumKey {
        default_level: None,
        region: None,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumEstimate {
    pub key: StratumKey,
    pub rounds: usize,
    pub estimate: ThetaEstimate,
}

/// Bootstrap settings for [`estimate_strata`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bootstrap {
    pub resamples: usize,
    pub seed: u64,
}

/// Estimates per stratum. Cells are ordered by default level (in order of
/// first appearance) and then region.
pub fn estimate_strata(
    observations: &[Observation],
    cfg: &GameConfig,
    opts: &EstimationOptions,
    strata: Strata,
    bootstrap: Option<Bootstrap>,
) -> Result<Vec<StratumEstimate>, EstimateError> {
    let mut cells: Vec<(StratumKey, Vec<Observation>)> = Vec::new();
    for obs in observations {
        let key = match strata {
            Strata::Pooled => StratumKey::POOLED,
            Strata::PeriodRegion => StratumKey {
                default_level: obs.default_level,
                region: Some(obs.region),
            },
        };
        match cells.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(obs.clone()),
            None => cells.push((key, vec![obs.clone()])),
        }
    }
    let mut levels: Vec<Option<f64>> = Vec::new();
    for (k, _) in &cells {
        if !levels.contains(&k.default_level) {
            levels.push(k.default_level);
        }
    }
    cells.sort_by_key(|(k, _)| {
        let level_rank = levels.iter().position(|l| *l == k.default_level).unwrap_or(0);
        (level_rank, k.region)
    });
    cells
        .into_iter()
        .enumerate()
        .map(|(cell, (key, obs))| {
            let estimate = match bootstrap {
                Some(b) => bootstrap_theta(
                    &obs,
                    cfg,
                    opts,
                    b.resamples,
                    split_seed(b.seed, &[cell as u64]),
                )?,
                None => estimate_theta(&obs, cfg, opts),
            };
            Ok(StratumEstimate {
                key,
                rounds: obs.len(),
                estimate,
            })
        })
        .collect()
}
