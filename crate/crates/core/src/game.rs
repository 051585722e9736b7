//! The lighting game: occupants vote for a light level, the mean of the votes
//! is implemented, and a fixed pot of points is split in proportion to how far
//! each vote sits below the baseline.
//!
//! Occupant `i` maximizes
//!
//! ```text
//! f_i(x) = -(x̄ - x_i)² + θ_i · ln( ρ (x_b - x_i) / (n x_b - Σ_j x_j) )
//! ```
//!
//! over its own vote `x_i`. Every quantity here is computed over the
//! *participants* of a round (active and default occupants); absent
//! occupants are invisible, and `n` is the participant count.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Denominators `n x_b - Σ x_j` at or below this are treated as a degenerate round.
pub const DENOMINATOR_TOL: f64 = 1e-9;

/// Tolerance used when deciding whether a vote sits on a bound.
pub const BOUND_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("invalid game configuration: {0}")]
    InvalidConfig(String),
    #[error("profile has {votes} votes but {roles} roles")]
    ProfileShape { votes: usize, roles: usize },
    #[error("no participating occupants in the round")]
    NoParticipants,
    #[error("occupant {0} is not part of the profile")]
    UnknownOccupant(usize),
    #[error("occupant {0} is absent from the round")]
    NotParticipating(usize),
    #[error("vote {vote} of occupant {occupant} lies outside [{lower}, {upper}]")]
    OutOfBounds {
        occupant: usize,
        vote: f64,
        lower: f64,
        upper: f64,
    },
    #[error("vote {vote} of occupant {occupant} is above the log-domain limit {limit}")]
    LogDomain {
        occupant: usize,
        vote: f64,
        limit: f64,
    },
    #[error("degenerate round: points denominator {denominator} is not positive")]
    DegenerateRound { denominator: f64 },
    #[error("theta has {got} entries, expected {expected}")]
    ThetaLength { expected: usize, got: usize },
    #[error("theta for occupant {occupant} is {value}; weights must be finite and nonnegative")]
    InvalidTheta { occupant: usize, value: f64 },
    #[error("invalid dual for occupant {occupant}: {reason}")]
    InvalidDual { occupant: usize, reason: String },
    #[error("grid step must be positive, got {0}")]
    InvalidGridStep(f64),
}

pub type Result<T, E = GameError> = std::result::Result<T, E>;

/// Game constants shared by every round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    /// Total points distributed per round.
    pub rho: f64,
    /// Baseline lighting level in percent (the pre-game standard level).
    pub baseline: f64,
    pub lower: f64,
    pub upper: f64,
    /// Width of the band below the baseline that is excluded from the
    /// strategy interval so the log term stays finite.
    pub margin: f64,
}

impl GameConfig {
    /// A `[0, 100]` game with a 1% log-domain margin.
    pub fn new(rho: f64, baseline: f64) -> Result<Self> {
        let cfg = Self {
            rho,
            baseline,
            lower: 0.0,
            upper: 100.0,
            margin: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_margin(mut self, margin: f64) -> Result<Self> {
        self.margin = margin;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(GameError::InvalidConfig(msg.to_string()));
        let finite = [self.rho, self.baseline, self.lower, self.upper, self.margin]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return bad("all parameters must be finite");
        }
        if !(self.rho > 0.0) {
            return bad("rho must be positive");
        }
        if !(0.0 <= self.lower && self.lower < self.upper) {
            return bad("bounds must satisfy 0 <= lower < upper");
        }
        if !(self.lower < self.baseline) {
            return bad("baseline must exceed the lower bound");
        }
        if !(self.margin > 0.0 && self.margin < self.baseline - self.lower) {
            return bad("margin must lie in (0, baseline - lower)");
        }
        Ok(())
    }

    /// Upper end of the strategy interval actually used by players.
    pub fn effective_upper(&self) -> f64 {
        self.upper.min(self.baseline - self.margin)
    }

    /// Projection onto `[lower, effective_upper]`.
    pub fn project(&self, x: f64) -> f64 {
        x.clamp(self.lower, self.effective_upper())
    }

    pub fn in_strategy_interval(&self, x: f64) -> bool {
        x >= self.lower && x <= self.effective_upper()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Present and explicitly chose a vote.
    Active,
    /// Present but left the standing default vote.
    Default,
    Absent,
}

impl Role {
    pub fn participates(self) -> bool {
        !matches!(self, Role::Absent)
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::Active => "active",
            Role::Default => "default",
            Role::Absent => "absent",
        })
    }
}

impl std::str::FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "active" => Ok(Role::Active),
            "default" => Ok(Role::Default),
            "absent" => Ok(Role::Absent),
            other => Err(format!("unknown role '{other}'")),
        }
    }
}

/// One vote per occupant, tagged with the occupant's role in the round.
/// Votes of absent occupants are carried but never read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteProfile {
    pub votes: Vec<f64>,
    pub roles: Vec<Role>,
}

impl VoteProfile {
    pub fn new(votes: Vec<f64>, roles: Vec<Role>) -> Result<Self> {
        if votes.len() != roles.len() {
            return Err(GameError::ProfileShape {
                votes: votes.len(),
                roles: roles.len(),
            });
        }
        Ok(Self { votes, roles })
    }

    pub fn all_active(votes: Vec<f64>) -> Self {
        let roles = vec![Role::Active; votes.len()];
        Self { votes, roles }
    }

    pub fn len(&self) -> usize {
        self.votes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.votes.is_empty()
    }

    pub fn participants(&self) -> impl Iterator<Item = usize> + '_ {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| r.participates())
            .map(|(i, _)| i)
    }

    pub fn players_with_role(&self, role: Role) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == role)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn participant_count(&self) -> usize {
        self.roles.iter().filter(|r| r.participates()).count()
    }

    /// Checks every participating vote against `[lower, upper]`.
    pub fn validate(&self, cfg: &GameConfig) -> Result<()> {
        if self.votes.len() != self.roles.len() {
            return Err(GameError::ProfileShape {
                votes: self.votes.len(),
                roles: self.roles.len(),
            });
        }
        for i in self.participants() {
            let v = self.votes[i];
            if !(v >= cfg.lower && v <= cfg.upper) {
                return Err(GameError::OutOfBounds {
                    occupant: i,
                    vote: v,
                    lower: cfg.lower,
                    upper: cfg.upper,
                });
            }
        }
        Ok(())
    }

    fn stats(&self) -> Result<RoundStats> {
        let mut n = 0usize;
        let mut sum = 0.0;
        for i in self.participants() {
            n += 1;
            sum += self.votes[i];
        }
        if n == 0 {
            return Err(GameError::NoParticipants);
        }
        Ok(RoundStats { n: n as f64, sum })
    }

    fn require_participant(&self, i: usize) -> Result<()> {
        match self.roles.get(i) {
            None => Err(GameError::UnknownOccupant(i)),
            Some(Role::Absent) => Err(GameError::NotParticipating(i)),
            Some(_) => Ok(()),
        }
    }
}

/// Per-occupant weight on the points term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThetaVector(Vec<f64>);

impl ThetaVector {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        for (i, &t) in theta.iter().enumerate() {
            if !(t.is_finite() && t >= 0.0) {
                return Err(GameError::InvalidTheta {
                    occupant: i,
                    value: t,
                });
            }
        }
        Ok(Self(theta))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if self.0.len() != n {
            return Err(GameError::ThetaLength {
                expected: n,
                got: self.0.len(),
            });
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for ThetaVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Participant count and vote total of a round.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RoundStats {
    pub n: f64,
    pub sum: f64,
}

impl RoundStats {
    pub fn mean(&self) -> f64 {
        self.sum / self.n
    }

    pub fn denominator(&self, baseline: f64) -> f64 {
        self.n * baseline - self.sum
    }
}

/// Derivative of the comfort term `-(x̄ - x_i)²` with respect to `x_i`.
pub fn comfort_partial(own: f64, n: f64, sum: f64) -> f64 {
    2.0 * (1.0 - 1.0 / n) * (sum / n - own)
}

/// Derivative of the log-points term with respect to `x_i`.
pub fn points_partial(own: f64, n: f64, sum: f64, baseline: f64) -> f64 {
    -1.0 / (baseline - own) + 1.0 / (n * baseline - sum)
}

/// Mean of the participating votes: the level the lights are set to.
pub fn implemented_setting(profile: &VoteProfile) -> Result<f64> {
    Ok(profile.stats()?.mean())
}

/// Points occupant `i` earns: `ρ (x_b - x_i) / (n x_b - Σ x_j)`.
pub fn points_share(i: usize, profile: &VoteProfile, cfg: &GameConfig) -> Result<f64> {
    profile.require_participant(i)?;
    let stats = points_domain(profile, cfg)?;
    Ok(cfg.rho * (cfg.baseline - profile.votes[i]) / stats.denominator(cfg.baseline))
}

/// Points for every occupant, zero for absent ones. Sums to `ρ`.
pub fn points_distribution(profile: &VoteProfile, cfg: &GameConfig) -> Result<Vec<f64>> {
    let stats = points_domain(profile, cfg)?;
    let denom = stats.denominator(cfg.baseline);
    Ok(profile
        .votes
        .iter()
        .zip(&profile.roles)
        .map(|(&v, r)| {
            if r.participates() {
                cfg.rho * (cfg.baseline - v) / denom
            } else {
                0.0
            }
        })
        .collect())
}

fn points_domain(profile: &VoteProfile, cfg: &GameConfig) -> Result<RoundStats> {
    profile.validate(cfg)?;
    for i in profile.participants() {
        let v = profile.votes[i];
        if v > cfg.baseline {
            return Err(GameError::LogDomain {
                occupant: i,
                vote: v,
                limit: cfg.baseline,
            });
        }
    }
    let stats = profile.stats()?;
    let denom = stats.denominator(cfg.baseline);
    if denom <= DENOMINATOR_TOL {
        return Err(GameError::DegenerateRound { denominator: denom });
    }
    Ok(stats)
}

/// Checks that occupant `i`'s utility is defined on `profile` and returns
/// the round statistics.
fn utility_domain(i: usize, profile: &VoteProfile, cfg: &GameConfig) -> Result<RoundStats> {
    profile.require_participant(i)?;
    profile.validate(cfg)?;
    let own = profile.votes[i];
    if own > cfg.effective_upper() {
        return Err(GameError::LogDomain {
            occupant: i,
            vote: own,
            limit: cfg.effective_upper(),
        });
    }
    let stats = profile.stats()?;
    let denom = stats.denominator(cfg.baseline);
    if denom <= DENOMINATOR_TOL {
        return Err(GameError::DegenerateRound { denominator: denom });
    }
    Ok(stats)
}

fn utility_at(own: f64, theta: f64, stats: RoundStats, cfg: &GameConfig) -> f64 {
    let comfort = -(stats.mean() - own).powi(2);
    if theta == 0.0 {
        return comfort;
    }
    let fraction = cfg.rho * (cfg.baseline - own) / stats.denominator(cfg.baseline);
    comfort + theta * fraction.ln()
}

pub fn utility(i: usize, profile: &VoteProfile, theta: &ThetaVector, cfg: &GameConfig) -> Result<f64> {
    theta.check_len(profile.len())?;
    let stats = utility_domain(i, profile, cfg)?;
    Ok(utility_at(profile.votes[i], theta[i], stats, cfg))
}

/// `D_i f_i`: derivative of occupant `i`'s utility with respect to its own vote.
pub fn utility_gradient(
    i: usize,
    profile: &VoteProfile,
    theta: &ThetaVector,
    cfg: &GameConfig,
) -> Result<f64> {
    theta.check_len(profile.len())?;
    let stats = utility_domain(i, profile, cfg)?;
    let own = profile.votes[i];
    Ok(comfort_partial(own, stats.n, stats.sum)
        + theta[i] * points_partial(own, stats.n, stats.sum, cfg.baseline))
}

/// Multipliers for the two box constraints of one occupant:
/// `upper` for `h_1 = upper - x_i ≥ 0`, `lower` for `h_2 = x_i - lower ≥ 0`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Dual {
    pub upper: f64,
    pub lower: f64,
}

/// Stacked Lagrangian derivatives `D_i L_i` over the participants, in
/// participant order. `duals` is indexed by occupant.
pub fn omega(
    profile: &VoteProfile,
    theta: &ThetaVector,
    cfg: &GameConfig,
    duals: &[Dual],
) -> Result<Vec<f64>> {
    if duals.len() != profile.len() {
        return Err(GameError::InvalidDual {
            occupant: duals.len().min(profile.len()),
            reason: format!("expected {} duals, got {}", profile.len(), duals.len()),
        });
    }
    let mut out = Vec::with_capacity(profile.participant_count());
    for i in profile.participants() {
        let mu = duals[i];
        let x = profile.votes[i];
        let invalid = |reason: &str| GameError::InvalidDual {
            occupant: i,
            reason: reason.to_string(),
        };
        if !(mu.upper >= 0.0 && mu.lower >= 0.0) {
            return Err(invalid("multipliers must be nonnegative"));
        }
        if mu.upper > 0.0 && x < cfg.effective_upper() - BOUND_TOL {
            return Err(invalid("upper-bound multiplier on an inactive constraint"));
        }
        if mu.lower > 0.0 && x > cfg.lower + BOUND_TOL {
            return Err(invalid("lower-bound multiplier on an inactive constraint"));
        }
        let grad = utility_gradient(i, profile, theta, cfg)?;
        out.push(grad - mu.upper + mu.lower);
    }
    Ok(out)
}

/// Jacobian of the stacked pseudogradient over all participants.
pub fn omega_jacobian(
    profile: &VoteProfile,
    theta: &ThetaVector,
    cfg: &GameConfig,
) -> Result<DMatrix<f64>> {
    let players: Vec<usize> = profile.participants().collect();
    omega_jacobian_block(profile, theta, cfg, &players)
}

/// Rows and columns of the pseudogradient Jacobian for the given players,
/// with every other participant held fixed.
///
/// Diagonal `-2(1-1/n)² + θ_i(1/D² - 1/(x_b-x_i)²)`, off-diagonal
/// `2(1-1/n)/n + θ_i/D²`, where `D = n x_b - Σ x_j`.
pub fn omega_jacobian_block(
    profile: &VoteProfile,
    theta: &ThetaVector,
    cfg: &GameConfig,
    players: &[usize],
) -> Result<DMatrix<f64>> {
    theta.check_len(profile.len())?;
    let mut stats = None;
    for &i in players {
        stats = Some(utility_domain(i, profile, cfg)?);
    }
    let Some(stats) = stats else {
        return Ok(DMatrix::zeros(0, 0));
    };
    let n = stats.n;
    let denom = stats.denominator(cfg.baseline);
    let comfort_diag = -2.0 * (1.0 - 1.0 / n).powi(2);
    let comfort_off = 2.0 * (1.0 - 1.0 / n) / n;
    let k = players.len();
    let mut jac = DMatrix::zeros(k, k);
    for (r, &i) in players.iter().enumerate() {
        let t = theta[i];
        let gap = cfg.baseline - profile.votes[i];
        for c in 0..k {
            jac[(r, c)] = if r == c {
                comfort_diag + t * (1.0 / (denom * denom) - 1.0 / (gap * gap))
            } else {
                comfort_off + t / (denom * denom)
            };
        }
    }
    Ok(jac)
}

/// Outcome of a grid search for profitable unilateral deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashCertificate {
    pub profile: VoteProfile,
    pub epsilon: f64,
    /// Occupants whose deviations were scanned.
    pub players: Vec<usize>,
    /// Largest utility gain found for each scanned player, floored at zero.
    pub per_player_gap: Vec<f64>,
    pub grid_step: f64,
}

impl NashCertificate {
    pub fn max_gap(&self) -> f64 {
        self.per_player_gap.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_valid(&self) -> bool {
        self.max_gap() <= self.epsilon
    }
}

/// ε-Nash check over every participant.
pub fn epsilon_nash_check(
    profile: &VoteProfile,
    theta: &ThetaVector,
    cfg: &GameConfig,
    epsilon: f64,
    grid_step: f64,
) -> Result<NashCertificate> {
    let players: Vec<usize> = profile.participants().collect();
    epsilon_nash_check_for(profile, theta, cfg, epsilon, grid_step, &players)
}

/// ε-Nash check restricted to `players`; deviations scan
/// `[lower, effective_upper]` at `grid_step` plus both endpoints.
pub fn epsilon_nash_check_for(
    profile: &VoteProfile,
    theta: &ThetaVector,
    cfg: &GameConfig,
    epsilon: f64,
    grid_step: f64,
    players: &[usize],
) -> Result<NashCertificate> {
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(GameError::InvalidGridStep(grid_step));
    }
    theta.check_len(profile.len())?;
    let lo = cfg.lower;
    let hi = cfg.effective_upper();
    let steps = ((hi - lo) / grid_step).floor() as usize;
    let mut gaps = Vec::with_capacity(players.len());
    for &i in players {
        let stats = utility_domain(i, profile, cfg)?;
        let own = profile.votes[i];
        let current = utility_at(own, theta[i], stats, cfg);
        let others = stats.sum - own;
        let deviation_utility = |x: f64| {
            let s = RoundStats {
                n: stats.n,
                sum: others + x,
            };
            utility_at(x, theta[i], s, cfg)
        };
        let mut best = deviation_utility(hi);
        for k in 0..=steps {
            let x = (lo + k as f64 * grid_step).min(hi);
            best = best.max(deviation_utility(x));
        }
        gaps.push((best - current).max(0.0));
    }
    Ok(NashCertificate {
        profile: profile.clone(),
        epsilon,
        players: players.to_vec(),
        per_player_gap: gaps,
        grid_step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg() -> GameConfig {
        GameConfig::new(100.0, 90.0).unwrap()
    }

    fn theta(v: &[f64]) -> ThetaVector {
        ThetaVector::new(v.to_vec()).unwrap()
    }

    fn fd_gradient(i: usize, p: &VoteProfile, t: &ThetaVector, c: &GameConfig) -> f64 {
        let h = 1e-5;
        let mut up = p.clone();
        up.votes[i] += h;
        let mut down = p.clone();
        down.votes[i] -= h;
        (utility(i, &up, t, c).unwrap() - utility(i, &down, t, c).unwrap()) / (2.0 * h)
    }

    #[test]
    fn implemented_setting_is_participant_mean() {
        assert_eq!(implemented_setting(&VoteProfile::all_active(vec![30.0, 60.0])).unwrap(), 45.0);
        assert_eq!(implemented_setting(&VoteProfile::all_active(vec![90.0; 4])).unwrap(), 90.0);
        let p = VoteProfile::new(
            vec![20.0, 70.0, 10.0],
            vec![Role::Active, Role::Absent, Role::Absent],
        )
        .unwrap();
        assert_eq!(implemented_setting(&p).unwrap(), 20.0);
        let empty = VoteProfile::new(vec![1.0], vec![Role::Absent]).unwrap();
        assert_eq!(implemented_setting(&empty), Err(GameError::NoParticipants));
    }

    #[test]
    fn points_split_thirty_sixty() {
        let p = VoteProfile::all_active(vec![30.0, 60.0]);
        let a = points_share(0, &p, &cfg()).unwrap();
        let b = points_share(1, &p, &cfg()).unwrap();
        assert_relative_eq!(a, 200.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(b, 100.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(a + b, 100.0, max_relative = 1e-12);
    }

    #[test]
    fn equal_votes_split_evenly() {
        let p = VoteProfile::all_active(vec![42.0; 3]);
        for i in 0..3 {
            assert_relative_eq!(points_share(i, &p, &cfg()).unwrap(), 100.0 / 3.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn all_votes_at_baseline_is_degenerate() {
        let p = VoteProfile::all_active(vec![90.0, 90.0]);
        assert!(matches!(points_share(0, &p, &cfg()), Err(GameError::DegenerateRound { .. })));
    }

    #[test]
    fn utility_examples() {
        let c = cfg();
        let same = VoteProfile::all_active(vec![50.0; 3]);
        assert_eq!(utility(1, &same, &theta(&[0.0; 3]), &c).unwrap(), 0.0);

        let p = VoteProfile::all_active(vec![30.0, 60.0]);
        assert_relative_eq!(utility(0, &p, &theta(&[0.0, 0.0]), &c).unwrap(), -225.0);
        assert_relative_eq!(
            utility(0, &p, &theta(&[1.0, 0.0]), &c).unwrap(),
            -225.0 + (200.0f64 / 3.0).ln(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn utility_rejects_votes_in_margin() {
        let p = VoteProfile::all_active(vec![89.5, 30.0]);
        assert!(matches!(
            utility(0, &p, &theta(&[1.0, 1.0]), &cfg()),
            Err(GameError::LogDomain { occupant: 0, .. })
        ));
    }

    #[test]
    fn gradient_examples() {
        let c = cfg();
        let same = VoteProfile::all_active(vec![50.0; 3]);
        assert_eq!(utility_gradient(0, &same, &theta(&[0.0; 3]), &c).unwrap(), 0.0);

        let p = VoteProfile::all_active(vec![30.0, 60.0]);
        let t0 = theta(&[0.0, 0.0]);
        let g0 = utility_gradient(0, &p, &t0, &c).unwrap();
        assert_relative_eq!(g0, 15.0, max_relative = 1e-12);
        assert_relative_eq!(g0, fd_gradient(0, &p, &t0, &c), max_relative = 1e-7);

        let t180 = theta(&[180.0, 0.0]);
        let g = utility_gradient(0, &p, &t180, &c).unwrap();
        assert_relative_eq!(g, 14.0, max_relative = 1e-12);
        assert_relative_eq!(g, fd_gradient(0, &p, &t180, &c), max_relative = 1e-7);
    }

    #[test]
    fn omega_interior_matches_gradients() {
        let c = cfg();
        let p = VoteProfile::all_active(vec![30.0, 60.0]);
        let t = theta(&[180.0, 0.0]);
        let w = omega(&p, &t, &c, &[Dual::default(); 2]).unwrap();
        assert_relative_eq!(w[0], 14.0, max_relative = 1e-12);
        assert_relative_eq!(w[1], -15.0, max_relative = 1e-12);
        assert_relative_eq!(w[1], fd_gradient(1, &p, &t, &c), max_relative = 1e-7);
    }

    #[test]
    fn omega_vanishes_with_boundary_multiplier() {
        let c = cfg();
        let p = VoteProfile::all_active(vec![0.0, 0.0]);
        let t = theta(&[180.0, 0.0]);
        let g = utility_gradient(0, &p, &t, &c).unwrap();
        assert!(g < 0.0);
        let duals = [Dual { upper: 0.0, lower: -g }, Dual::default()];
        let w = omega(&p, &t, &c, &duals).unwrap();
        assert!(w[0].abs() < 1e-12);
    }

    #[test]
    fn omega_rejects_bad_duals() {
        let c = cfg();
        let p = VoteProfile::all_active(vec![30.0, 60.0]);
        let t = theta(&[1.0, 1.0]);
        let neg = [Dual { upper: -1.0, lower: 0.0 }, Dual::default()];
        assert!(matches!(omega(&p, &t, &c, &neg), Err(GameError::InvalidDual { occupant: 0, .. })));
        let inactive = [Dual { upper: 0.0, lower: 2.0 }, Dual::default()];
        assert!(matches!(omega(&p, &t, &c, &inactive), Err(GameError::InvalidDual { .. })));
    }

    #[test]
    fn single_player_jacobian_is_zero() {
        let p = VoteProfile::new(vec![40.0, 10.0], vec![Role::Active, Role::Absent]).unwrap();
        let j = omega_jacobian(&p, &theta(&[0.0, 5.0]), &cfg()).unwrap();
        assert_eq!(j.shape(), (1, 1));
        assert_eq!(j[(0, 0)], 0.0);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let c = cfg();
        let p = VoteProfile::all_active(vec![12.0, 47.0, 71.0, 33.0]);
        let t = theta(&[250.0, 0.0, 3000.0, 17.0]);
        let j = omega_jacobian(&p, &t, &c).unwrap();
        let h = 1e-5;
        let duals = vec![Dual::default(); 4];
        for col in 0..4 {
            let mut up = p.clone();
            up.votes[col] += h;
            let mut down = p.clone();
            down.votes[col] -= h;
            let wu = omega(&up, &t, &c, &duals).unwrap();
            let wd = omega(&down, &t, &c, &duals).unwrap();
            for row in 0..4 {
                let fd = (wu[row] - wd[row]) / (2.0 * h);
                assert_relative_eq!(j[(row, col)], fd, max_relative = 1e-5, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn absent_entries_do_not_change_results() {
        let c = cfg();
        let dense = VoteProfile::all_active(vec![30.0, 60.0]);
        let sparse = VoteProfile::new(
            vec![30.0, 5.0, 60.0],
            vec![Role::Active, Role::Absent, Role::Active],
        )
        .unwrap();
        let td = theta(&[180.0, 2.0]);
        let ts = theta(&[180.0, 99.0, 2.0]);
        assert_eq!(utility(0, &dense, &td, &c), utility(0, &sparse, &ts, &c));
        assert_eq!(
            utility_gradient(1, &dense, &td, &c),
            utility_gradient(2, &sparse, &ts, &c)
        );
        assert_eq!(points_share(1, &dense, &c), points_share(2, &sparse, &c));
        assert_eq!(omega_jacobian(&dense, &td, &c), omega_jacobian(&sparse, &ts, &c));
        assert!(matches!(points_share(1, &sparse, &c), Err(GameError::NotParticipating(1))));
    }

    #[test]
    fn epsilon_nash_examples() {
        let c = cfg();
        let same = VoteProfile::all_active(vec![44.0; 3]);
        let cert = epsilon_nash_check(&same, &theta(&[0.0; 3]), &c, 1e-9, 0.1).unwrap();
        assert!(cert.is_valid());
        assert!(cert.per_player_gap.iter().all(|&g| g == 0.0));

        let t = theta(&[180.0, 0.0]);
        let corner = VoteProfile::all_active(vec![0.0, 0.0]);
        assert!(epsilon_nash_check(&corner, &t, &c, 1e-6, 0.1).unwrap().is_valid());

        let off = VoteProfile::all_active(vec![30.0, 60.0]);
        let cert = epsilon_nash_check(&off, &t, &c, 1e-6, 0.1).unwrap();
        assert!(!cert.is_valid());
        assert!(cert.per_player_gap[0] > 0.0);
    }

    #[test]
    fn grid_step_must_be_positive() {
        let p = VoteProfile::all_active(vec![10.0, 20.0]);
        assert_eq!(
            epsilon_nash_check(&p, &ThetaVector::zeros(2), &cfg(), 1e-3, 0.0).unwrap_err(),
            GameError::InvalidGridStep(0.0)
        );
    }

    #[test]
    fn config_validation() {
        assert!(GameConfig::new(0.0, 90.0).is_err());
        assert!(GameConfig::new(100.0, 0.0).is_err());
        assert!(cfg().with_margin(90.0).is_err());
        assert_eq!(cfg().effective_upper(), 89.0);
        assert!(ThetaVector::new(vec![1.0, -0.5]).is_err());
    }
}
