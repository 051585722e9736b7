//! Data generated by the model itself, for tests, benchmarks and demos.

use chrono::{Duration, NaiveDate, NaiveTime, TimeZone};
use chrono_tz::Tz;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::equilibrium::{solve_nash, SolverParams};
use crate::game::{GameConfig, GameError, Result, Role, ThetaVector, VoteProfile};
use crate::observation::Region;
use crate::pipeline::{DefaultPeriod, DefaultSchedule, VoteRecord};
use crate::stats::split_seed;

/// ARMA(1,1) path `y_t = c + φ y_{t-1} + e_t + ϑ e_{t-1}` with Gaussian
/// innovations, after a 500-step burn-in.
pub fn simulate_arma(phi: f64, theta: f64, c: f64, sigma: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("sigma must be finite and non-negative");
    let burn = 500;
    let mut y = c / (1.0 - phi);
    let mut e_prev = 0.0;
    let mut out = Vec::with_capacity(n);
    for t in 0..burn + n {
        let e = noise.sample(&mut rng);
        y = c + phi * y + e + theta * e_prev;
        e_prev = e;
        if t >= burn {
            out.push(y);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOccupant {
    pub id: String,
    pub theta: f64,
    /// Daily probabilities of (absent, default, active).
    pub presence: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub start: NaiveDate,
    pub days: usize,
    /// Standard deviation of the Gaussian noise added to active votes.
    pub noise_sd: f64,
    pub seed: u64,
}

/// `count` occupants `occ01`, `occ02`, ... with θ spread log-uniformly over
/// `[1, 1000]` and mixed attendance.
pub fn population(count: usize, seed: u64) -> Vec<SyntheticOccupant> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let theta = 10f64.powf(rng.random_range(0.0..3.0));
            let absent = rng.random_range(0.05..0.3);
            let default = rng.random_range(0.05..0.3);
            SyntheticOccupant {
                id: format!("occ{:02}", i + 1),
                theta,
                presence: [absent, default, 1.0 - absent - default],
            }
        })
        .collect()
}

/// Splits `days` days from `start` into equal consecutive periods, one per level.
pub fn even_schedule(start: NaiveDate, days: usize, levels: &[f64]) -> DefaultSchedule {
    let k = levels.len().max(1);
    let mut periods = Vec::new();
    let mut from = 0;
    for (p, &level) in levels.iter().enumerate() {
        let to = if p + 1 == k { days } else { (p + 1) * days / k };
        periods.push(DefaultPeriod {
            start: start + Duration::days(from as i64),
            end: start + Duration::days(to as i64 - 1),
            default_level: level,
        });
        from = to;
    }
    DefaultSchedule::new(periods).expect("even split is contiguous")
}

fn region_midpoint(r: Region) -> NaiveTime {
    let (h, m) = match r {
        Region::Dawn => (7, 30),
        Region::Daylight => (13, 30),
        Region::Dusk => (18, 30),
        Region::Night => (22, 30),
    };
    NaiveTime::from_hms_opt(h, m, 0).unwrap()
}

fn sample_role(p: &[f64; 3], rng: &mut impl Rng) -> Role {
    let u: f64 = rng.random();
    if u < p[0] {
        Role::Absent
    } else if u < p[0] + p[1] {
        Role::Default
    } else {
        Role::Active
    }
}

/// Vote log drawn from the model: each day every occupant's state is
/// sampled, active occupants play to equilibrium against the day's default
/// votes, and each region gets one record per present occupant at its
/// midpoint, with noise on the active votes.
pub fn generate_votes(
    occupants: &[SyntheticOccupant],
    schedule: &DefaultSchedule,
    cfg: &GameConfig,
    params: &SolverParams,
    sc: &SyntheticConfig,
    tz: Tz,
) -> Result<Vec<VoteRecord>> {
    let theta = ThetaVector::new(occupants.iter().map(|o| o.theta).collect())?;
    let noise = Normal::new(0.0, sc.noise_sd)
        .map_err(|e| GameError::InvalidConfig(format!("noise_sd: {e}")))?;
    let mut records = Vec::new();
    for d in 0..sc.days {
        let day = sc.start + Duration::days(d as i64);
        let level = schedule
            .level_on(day)
            .ok_or_else(|| GameError::InvalidConfig(format!("{day} is outside the default schedule")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(sc.seed, &[d as u64]));
        let roles: Vec<Role> = occupants.iter().map(|o| sample_role(&o.presence, &mut rng)).collect();
        if !roles.iter().any(|r| r.participates()) {
            continue;
        }
        let start = cfg.project(level);
        let votes = roles
            .iter()
            .map(|r| if *r == Role::Active { start } else { level })
            .collect();
        let init = VoteProfile::new(votes, roles.clone())?;
        let eq = solve_nash(&theta, &init, cfg, params)?;
        for region in Region::ALL {
            let naive = day.and_time(region_midpoint(region));
            let timestamp = tz
                .from_local_datetime(&naive)
                .earliest()
                .expect("midpoints avoid DST gaps")
                .fixed_offset();
            for (i, o) in occupants.iter().enumerate() {
                let (vote, is_default) = match roles[i] {
                    Role::Absent => continue,
                    Role::Default => (level, true),
                    Role::Active => {
                        let v = eq.profile.votes[i] + noise.sample(&mut rng);
                        (v.clamp(cfg.lower, cfg.upper), false)
                    }
                };
                records.push(VoteRecord {
                    timestamp,
                    occupant_id: o.id.clone(),
                    vote,
                    is_default,
                    session_start: region == Region::Dawn,
                });
            }
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_schedule_covers_every_day() {
        let start = NaiveDate::from_ymd_opt(2014, 3, 3).unwrap();
        let s = even_schedule(start, 10, &[20.0, 60.0, 90.0]);
        assert_eq!(s.periods().len(), 3);
        assert_eq!(s.level_on(start), Some(20.0));
        assert_eq!(s.level_on(start + Duration::days(9)), Some(90.0));
        assert_eq!(s.level_on(start + Duration::days(10)), None);
    }

    #[test]
    fn generated_votes_are_reproducible_and_in_range() {
        let start = NaiveDate::from_ymd_opt(2014, 3, 3).unwrap();
        let pop = population(5, 1);
        let schedule = even_schedule(start, 6, &[20.0, 60.0]);
        let sc = SyntheticConfig {
            start,
            days: 6,
            noise_sd: 1.0,
            seed: 3,
        };
        let cfg = GameConfig::new(100.0, 90.0).unwrap();
        let tz = chrono_tz::America::Los_Angeles;
        let a = generate_votes(&pop, &schedule, &cfg, &SolverParams::default(), &sc, tz).unwrap();
        let b = generate_votes(&pop, &schedule, &cfg, &SolverParams::default(), &sc, tz).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty());
        assert!(a.iter().all(|r| (0.0..=100.0).contains(&r.vote)));
    }

    #[test]
    fn white_noise_has_no_autocorrelation() {
        let y = simulate_arma(0.0, 0.0, 0.0, 1.0, 4000, 5);
        let m = y.iter().sum::<f64>() / y.len() as f64;
        let v: f64 = y.iter().map(|x| (x - m).powi(2)).sum();
        let c: f64 = y.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        assert!((c / v).abs() < 0.05);
    }
}
