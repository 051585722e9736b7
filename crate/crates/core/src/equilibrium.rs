//! Nash equilibria of the lighting game by projected pseudogradient ascent.
//!
//! Each active player follows `x_i ← Π(x_i + h · D_i f_i(x))`, the forward
//! Euler step of the gradient flow, where `Π` clamps onto
//! `[lower, effective_upper]`. Clamping plays the role of the boundary
//! multipliers: for a box it yields the same velocity as the minimal-norm
//! dual selection. Default players hold their votes fixed.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::game::{
    self, comfort_partial, points_partial, GameConfig, GameError, NashCertificate, Result, Role,
    ThetaVector, VoteProfile, DENOMINATOR_TOL,
};

/// Eigenvalues with real part above `-STABILITY_TOL` count as not stable.
pub const STABILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub step_size: f64,
    pub max_iters: usize,
    /// Stop once the largest per-player move in one step falls below this.
    pub convergence_tol: f64,
    pub epsilon_check: f64,
    pub grid_step: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            step_size: 0.05,
            max_iters: 200_000,
            convergence_tol: 1e-9,
            epsilon_check: 1e-3,
            grid_step: 0.1,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.step_size,
            self.convergence_tol,
            self.epsilon_check,
            self.grid_step,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0);
        if !positive || self.max_iters == 0 {
            return Err(GameError::InvalidConfig(
                "solver parameters must be positive and max_iters >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub profile: VoteProfile,
    pub iterations: usize,
    pub converged: bool,
    /// ε-Nash certificate over the active players of `profile`.
    pub certificate: NashCertificate,
    /// `None` when some active player sits on a bound.
    pub stable: Option<bool>,
}

/// Runs projected gradient play from `init`.
///
/// Roles in `init` decide who moves: active players start from their votes in
/// `init` (which must lie in the strategy interval), default players keep
/// their votes, absent players are ignored.
pub fn solve_nash(
    theta: &ThetaVector,
    init: &VoteProfile,
    cfg: &GameConfig,
    params: &SolverParams,
) -> Result<SolveResult> {
    solve_nash_observed(theta, init, cfg, params, |_, _| {})
}

/// [`solve_nash`] with a callback receiving `(iteration, votes)` after every step.
pub fn solve_nash_observed(
    theta: &ThetaVector,
    init: &VoteProfile,
    cfg: &GameConfig,
    params: &SolverParams,
    mut observer: impl FnMut(usize, &[f64]),
) -> Result<SolveResult> {
    cfg.validate()?;
    params.validate()?;
    if theta.len() != init.len() {
        return Err(GameError::ThetaLength {
            expected: init.len(),
            got: theta.len(),
        });
    }
    init.validate(cfg)?;
    let active = init.players_with_role(Role::Active);
    for &i in &active {
        if !cfg.in_strategy_interval(init.votes[i]) {
            return Err(GameError::LogDomain {
                occupant: i,
                vote: init.votes[i],
                limit: cfg.effective_upper(),
            });
        }
    }
    let n = init.participant_count();
    if n == 0 {
        return Err(GameError::NoParticipants);
    }
    let n = n as f64;

    let mut votes = init.votes.clone();
    let mut sum: f64 = init.participants().map(|i| votes[i]).sum();
    let mut next = vec![0.0; active.len()];
    let mut iterations = 0;
    let mut converged = active.is_empty();

    while !converged && iterations < params.max_iters {
        let denom = n * cfg.baseline - sum;
        if denom <= DENOMINATOR_TOL {
            return Err(GameError::DegenerateRound { denominator: denom });
        }
        let mut displacement: f64 = 0.0;
        for (slot, &i) in next.iter_mut().zip(&active) {
            let x = votes[i];
            let mut grad = comfort_partial(x, n, sum);
            if theta[i] != 0.0 {
                grad += theta[i] * points_partial(x, n, sum, cfg.baseline);
            }
            let moved = cfg.project(x + params.step_size * grad);
            displacement = displacement.max((moved - x).abs());
            *slot = moved;
        }
        for (&x, &i) in next.iter().zip(&active) {
            votes[i] = x;
        }
        sum = init.participants().map(|i| votes[i]).sum();
        iterations += 1;
        observer(iterations, &votes);
        converged = displacement < params.convergence_tol;
    }

    let profile = VoteProfile {
        votes,
        roles: init.roles.clone(),
    };
    let certificate = game::epsilon_nash_check_for(
        &profile,
        theta,
        cfg,
        params.epsilon_check,
        params.grid_step,
        &active,
    )?;
    let stable = match stability_check(&profile, theta, cfg)? {
        Stability::Evaluated(report) => Some(report.stable),
        Stability::NotApplicable { .. } => None,
    };
    Ok(SolveResult {
        profile,
        iterations,
        converged,
        certificate,
        stable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// All eigenvalues of the active-player Jacobian have negative real part.
    pub stable: bool,
    pub eigenvalues: Vec<(f64, f64)>,
    /// `D_ii L_i` for each active player, in active-player order.
    pub own_curvature: Vec<f64>,
    /// Every own-curvature entry is strictly negative.
    pub second_order: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Stability {
    Evaluated(StabilityReport),
    /// Some active players sit on a bound, where the duals matter.
    NotApplicable { boundary_players: Vec<usize> },
}

/// Linear stability of the projected flow at an interior profile, over the
/// active players of `profile` with default players held fixed.
pub fn stability_check(
    profile: &VoteProfile,
    theta: &ThetaVector,
    cfg: &GameConfig,
) -> Result<Stability> {
    let active = profile.players_with_role(Role::Active);
    let hi = cfg.effective_upper();
    let boundary: Vec<usize> = active
        .iter()
        .copied()
        .filter(|&i| {
            let x = profile.votes[i];
            (x - cfg.lower).abs() <= 1e-9 || (x - hi).abs() <= 1e-9
        })
        .collect();
    if !boundary.is_empty() {
        return Ok(Stability::NotApplicable {
            boundary_players: boundary,
        });
    }
    let jac = game::omega_jacobian_block(profile, theta, cfg, &active)?;
    let own_curvature: Vec<f64> = (0..active.len()).map(|k| jac[(k, k)]).collect();
    let eigenvalues: Vec<Complex<f64>> = if active.is_empty() {
        Vec::new()
    } else {
        jac.complex_eigenvalues().iter().copied().collect()
    };
    let stable = eigenvalues.iter().all(|z| z.re < -STABILITY_TOL);
    let second_order = own_curvature.iter().all(|&d| d < 0.0);
    Ok(Stability::Evaluated(StabilityReport {
        stable,
        eigenvalues: eigenvalues.iter().map(|z| (z.re, z.im)).collect(),
        own_curvature,
        second_order,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> GameConfig {
        GameConfig::new(100.0, 90.0).unwrap()
    }

    /// Stationary point of the single active player against fixed defaults,
    /// by bisection on its (decreasing) first-order condition.
    fn bisect_single(theta: f64, others: &[f64], c: &GameConfig) -> f64 {
        let n = (others.len() + 1) as f64;
        let foc = |x: f64| {
            let sum = x + others.iter().sum::<f64>();
            2.0 * (1.0 - 1.0 / n) * (sum / n - x)
                + theta * (-1.0 / (c.baseline - x) + 1.0 / (n * c.baseline - sum))
        };
        let (mut lo, mut hi) = (c.lower, c.effective_upper());
        if foc(lo) <= 0.0 {
            return lo;
        }
        if foc(hi) >= 0.0 {
            return hi;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if foc(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn symmetric_zero_theta_is_immediately_stationary() {
        let init = VoteProfile::all_active(vec![35.0; 4]);
        let r = solve_nash(&ThetaVector::zeros(4), &init, &cfg(), &SolverParams::default()).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 1);
        assert_eq!(r.profile.votes, vec![35.0; 4]);
        assert!(r.certificate.is_valid());
        // Dω is singular on the consensus line.
        assert_eq!(r.stable, Some(false));
    }

    #[test]
    fn aggressive_player_drags_both_to_zero() {
        let theta = ThetaVector::new(vec![180.0, 0.0]).unwrap();
        let init = VoteProfile::all_active(vec![30.0, 60.0]);
        let r = solve_nash(&theta, &init, &cfg(), &SolverParams::default()).unwrap();
        assert!(r.converged);
        assert!(r.profile.votes.iter().all(|v| v.abs() < 1e-3), "{:?}", r.profile.votes);
        assert!(r.certificate.is_valid());
        assert_eq!(r.stable, None);
    }

    #[test]
    fn single_active_player_matches_bisection() {
        let c = cfg();
        let theta = ThetaVector::new(vec![100.0, 0.0]).unwrap();
        let init = VoteProfile::new(vec![60.0, 60.0], vec![Role::Active, Role::Default]).unwrap();
        let r = solve_nash(&theta, &init, &c, &SolverParams::default()).unwrap();
        let oracle = bisect_single(100.0, &[60.0], &c);
        assert!(oracle > 0.0 && oracle < 89.0);
        assert!(r.converged);
        assert!((r.profile.votes[0] - oracle).abs() < 1e-4);
        assert_eq!(r.profile.votes[1], 60.0);
        assert_eq!(r.stable, Some(true));
    }

    #[test]
    fn iterates_stay_feasible_and_are_deterministic() {
        let c = cfg();
        let theta = ThetaVector::new(vec![5000.0, 20.0, 0.0, 800.0]).unwrap();
        let init = VoteProfile::new(
            vec![80.0, 10.0, 60.0, 45.0],
            vec![Role::Active, Role::Active, Role::Default, Role::Active],
        )
        .unwrap();
        let mut first = Vec::new();
        let r1 = solve_nash_observed(&theta, &init, &c, &SolverParams::default(), |_, v| {
            assert!(v.iter().all(|&x| x >= c.lower && x <= c.effective_upper()));
            first.push(v.to_vec());
        })
        .unwrap();
        let mut second = Vec::new();
        let r2 = solve_nash_observed(&theta, &init, &c, &SolverParams::default(), |_, v| {
            second.push(v.to_vec());
        })
        .unwrap();
        assert_eq!(first, second);
        assert_eq!(r1, r2);
        assert!(r1.converged && r1.certificate.is_valid());
    }

    #[test]
    fn comfort_improves_monotonically_for_follower() {
        let c = cfg();
        let theta = ThetaVector::zeros(3);
        let init = VoteProfile::new(
            vec![10.0, 70.0, 40.0],
            vec![Role::Active, Role::Default, Role::Default],
        )
        .unwrap();
        let mut last = f64::NEG_INFINITY;
        solve_nash_observed(&theta, &init, &c, &SolverParams::default(), |_, v| {
            let mean = v.iter().sum::<f64>() / 3.0;
            let comfort = -(mean - v[0]).powi(2);
            assert!(comfort >= last - 1e-12);
            last = comfort;
        })
        .unwrap();
    }

    #[test]
    fn init_outside_strategy_interval_is_rejected() {
        let init = VoteProfile::all_active(vec![95.0, 10.0]);
        let e = solve_nash(&ThetaVector::zeros(2), &init, &cfg(), &SolverParams::default());
        assert!(matches!(e, Err(GameError::LogDomain { occupant: 0, .. })));
    }

    #[test]
    fn exhausted_iterations_report_unconverged() {
        let theta = ThetaVector::new(vec![180.0, 0.0]).unwrap();
        let init = VoteProfile::all_active(vec![30.0, 60.0]);
        let params = SolverParams {
            max_iters: 3,
            ..SolverParams::default()
        };
        let r = solve_nash(&theta, &init, &cfg(), &params).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
    }

    #[test]
    fn zero_theta_spectrum_matches_characteristic_polynomial() {
        // With θ = 0 the Jacobian is (a-b)I + b·11ᵀ: eigenvalue a-b with
        // multiplicity n-1 and a+(n-1)b = 0.
        for n in 2..7usize {
            let votes: Vec<f64> = (0..n).map(|k| 10.0 + 7.0 * k as f64).collect();
            let p = VoteProfile::all_active(votes);
            let Stability::Evaluated(rep) = stability_check(&p, &ThetaVector::zeros(n), &cfg()).unwrap()
            else {
                panic!("interior profile")
            };
            let nf = n as f64;
            let a = -2.0 * (1.0 - 1.0 / nf).powi(2);
            let b = 2.0 * (1.0 - 1.0 / nf) / nf;
            let mut expected = vec![a - b; n - 1];
            expected.push(a + (nf - 1.0) * b);
            expected.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let mut got: Vec<f64> = rep.eigenvalues.iter().map(|z| z.0).collect();
            got.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for (g, e) in got.iter().zip(&expected) {
                assert!((g - e).abs() < 1e-10, "n={n}: {got:?} vs {expected:?}");
            }
            assert!(rep.eigenvalues.iter().all(|z| z.1.abs() < 1e-10));
            assert!(!rep.stable);
        }
    }

    #[test]
    fn lone_player_curvature() {
        let c = cfg();
        let theta = ThetaVector::new(vec![40.0, 0.0]).unwrap();
        let p = VoteProfile::new(vec![30.0, 0.0], vec![Role::Active, Role::Absent]).unwrap();
        let Stability::Evaluated(rep) = stability_check(&p, &theta, &c).unwrap() else {
            panic!()
        };
        // n = 1: comfort term vanishes and D = x_b - x_1, so the own curvature
        // is 40·(1/60² - 1/60²) = 0.
        assert_eq!(rep.own_curvature, vec![0.0]);
        assert!(!rep.stable);
    }

    #[test]
    fn large_theta_gives_negative_diagonal() {
        let c = cfg();
        let theta = ThetaVector::new(vec![9000.0, 3.0, 0.0]).unwrap();
        let p = VoteProfile::all_active(vec![40.0, 55.0, 70.0]);
        let Stability::Evaluated(rep) = stability_check(&p, &theta, &c).unwrap() else {
            panic!()
        };
        assert!(rep.second_order);
        assert!(rep.own_curvature.iter().all(|&d| d < 0.0));
    }
}
