//! Game state and its transition function. Live requests and log replay go
//! through the same [`GameState::apply`], which is what makes replay exact.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, FixedOffset, NaiveDate, NaiveTime};
use chrono_tz::Tz;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ServiceError;
use crate::game::{points_distribution, GameConfig, GameError, VoteProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Login {
        occupant: String,
        at: DateTime<FixedOffset>,
    },
    Vote {
        occupant: String,
        value: f64,
        at: DateTime<FixedOffset>,
    },
    /// Takes effect when the next presence day starts.
    SetDefault { level: f64, at: DateTime<FixedOffset> },
    /// Closes the current round now instead of at the cutoff.
    Award { at: DateTime<FixedOffset> },
    Lottery {
        seed: u64,
        winners: Vec<String>,
        reset: bool,
        at: DateTime<FixedOffset>,
    },
}

impl Event {
    pub fn at(&self) -> DateTime<FixedOffset> {
        match self {
            Event::Login { at, .. }
            | Event::Vote { at, .. }
            | Event::SetDefault { at, .. }
            | Event::Award { at }
            | Event::Lottery { at, .. } => *at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OccupantState {
    pub present: bool,
    /// Standing vote in the current round; the default until changed.
    pub vote: Option<f64>,
    pub points: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub day: NaiveDate,
    /// Present occupants' standing votes at closing.
    pub votes: BTreeMap<String, f64>,
    pub increments: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LotteryRecord {
    pub seed: u64,
    pub winners: Vec<String>,
    pub reset: bool,
    pub at: DateTime<FixedOffset>,
}

/// A vote-log row produced by the service: logins carry the default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteEntry {
    pub at: DateTime<FixedOffset>,
    pub occupant: String,
    pub value: f64,
    pub is_default: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    /// Events applied so far.
    pub seq: u64,
    pub default_level: f64,
    pub pending_default: Option<f64>,
    /// Presence day of the open round.
    pub day: Option<NaiveDate>,
    pub occupants: BTreeMap<String, OccupantState>,
    pub rounds: Vec<RoundRecord>,
    pub lotteries: Vec<LotteryRecord>,
    pub votes: Vec<VoteEntry>,
}

/// Fixed rules the state machine runs under.
#[derive(Debug, Clone, PartialEq)]
pub struct Rules {
    pub game: GameConfig,
    pub tz: Tz,
    /// Local time from which activity counts toward the next presence day.
    pub cutoff: NaiveTime,
    pub winners: usize,
}

impl Rules {
    pub fn presence_day(&self, at: &DateTime<FixedOffset>) -> NaiveDate {
        let local = at.with_timezone(&self.tz);
        if local.time() >= self.cutoff {
            local.date_naive() + Duration::days(1)
        } else {
            local.date_naive()
        }
    }
}

/// Points for one closed round. Votes at or above the baseline earn nothing;
/// if every vote is there, `ρ` is split equally.
pub fn award_points(votes: &[f64], cfg: &GameConfig) -> Vec<f64> {
    let clamped: Vec<f64> = votes.iter().map(|v| v.min(cfg.baseline)).collect();
    match points_distribution(&VoteProfile::all_active(clamped), cfg) {
        Ok(p) => p,
        Err(GameError::DegenerateRound { .. }) => vec![cfg.rho / votes.len() as f64; votes.len()],
        Err(e) => unreachable!("clamped votes are admissible: {e}"),
    }
}

/// Up to `count` distinct winners, each drawn with probability proportional
/// to points among those not yet drawn. Candidates are taken in id order.
pub fn draw_winners(points: &BTreeMap<String, f64>, count: usize, seed: u64) -> Result<Vec<String>, ServiceError> {
    let mut pool: Vec<(&String, f64)> = points.iter().filter(|(_, p)| **p > 0.0).map(|(k, p)| (k, *p)).collect();
    if pool.is_empty() {
        return Err(ServiceError::NoPoints);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut winners = Vec::new();
    while winners.len() < count && !pool.is_empty() {
        let dist = WeightedIndex::new(pool.iter().map(|(_, p)| *p)).expect("positive weights");
        let k = dist.sample(&mut rng);
        winners.push(pool.remove(k).0.clone());
    }
    Ok(winners)
}

impl GameState {
    pub fn new(occupants: &[String], default_level: f64) -> Self {
        Self {
            seq: 0,
            default_level,
            pending_default: None,
            day: None,
            occupants: occupants.iter().map(|id| (id.clone(), OccupantState::default())).collect(),
            rounds: Vec::new(),
            lotteries: Vec::new(),
            votes: Vec::new(),
        }
    }

    /// Mean of the present occupants' standing votes.
    pub fn implemented(&self) -> Option<f64> {
        let votes: Vec<f64> = self.occupants.values().filter(|o| o.present).filter_map(|o| o.vote).collect();
        (!votes.is_empty()).then(|| votes.iter().sum::<f64>() / votes.len() as f64)
    }

    pub fn points(&self) -> BTreeMap<String, f64> {
        self.occupants.iter().map(|(k, o)| (k.clone(), o.points)).collect()
    }

    /// Rejects events that `apply` would refuse, without changing anything.
    pub fn check(&self, event: &Event, rules: &Rules) -> Result<(), ServiceError> {
        let day = rules.presence_day(&event.at());
        if let Some(open) = self.day {
            if day < open {
                return Err(ServiceError::ClockSkew { open, got: day });
            }
        }
        let rolled = self.day != Some(day);
        match event {
            Event::Login { occupant, .. } => {
                self.known(occupant)?;
            }
            Event::Vote { occupant, value, .. } => {
                let o = self.known(occupant)?;
                if !(0.0..=100.0).contains(value) {
                    return Err(ServiceError::VoteRange(*value));
                }
                if !o.present || rolled {
                    return Err(ServiceError::NotPresent(occupant.clone()));
                }
            }
            Event::SetDefault { level, .. } => {
                if !(0.0..=100.0).contains(level) {
                    return Err(ServiceError::VoteRange(*level));
                }
            }
            Event::Award { .. } => {}
            Event::Lottery { winners, .. } => {
                for w in winners {
                    self.known(w)?;
                }
            }
        }
        Ok(())
    }

    fn known(&self, id: &str) -> Result<&OccupantState, ServiceError> {
        self.occupants.get(id).ok_or_else(|| ServiceError::UnknownOccupant(id.to_string()))
    }

    /// Applies one event. Crossing into a later presence day first closes the
    /// open round and starts a new one.
    pub fn apply(&mut self, event: &Event, rules: &Rules) -> Result<(), ServiceError> {
        self.check(event, rules)?;
        self.roll_to(rules.presence_day(&event.at()), rules);
        match event {
            Event::Login { occupant, at } => {
                let default = self.default_level;
                let o = self.occupants.get_mut(occupant).expect("checked");
                if !o.present {
                    o.present = true;
                    o.vote = Some(default);
                    self.votes.push(VoteEntry {
                        at: *at,
                        occupant: occupant.clone(),
                        value: default,
                        is_default: true,
                    });
                }
            }
            Event::Vote { occupant, value, at } => {
                self.occupants.get_mut(occupant).expect("checked").vote = Some(*value);
                self.votes.push(VoteEntry {
                    at: *at,
                    occupant: occupant.clone(),
                    value: *value,
                    is_default: false,
                });
            }
            Event::SetDefault { level, .. } => self.pending_default = Some(*level),
            Event::Award { .. } => self.close_round(rules),
            Event::Lottery {
                seed,
                winners,
                reset,
                at,
            } => {
                if *reset {
                    for o in self.occupants.values_mut() {
                        o.points = 0.0;
                    }
                }
                self.lotteries.push(LotteryRecord {
                    seed: *seed,
                    winners: winners.clone(),
                    reset: *reset,
                    at: *at,
                });
            }
        }
        self.seq += 1;
        Ok(())
    }

    /// Moves to presence day `day`, closing the open round and applying any
    /// pending default if it is a different day.
    pub(crate) fn roll_to(&mut self, day: NaiveDate, rules: &Rules) {
        if self.day != Some(day) {
            self.close_round(rules);
            if let Some(level) = self.pending_default.take() {
                self.default_level = level;
            }
            self.day = Some(day);
        }
    }

    /// Awards the open round's points and clears presence. No-op when nobody
    /// is present.
    fn close_round(&mut self, rules: &Rules) {
        let present: Vec<(String, f64)> = self
            .occupants
            .iter()
            .filter(|(_, o)| o.present)
            .filter_map(|(k, o)| o.vote.map(|v| (k.clone(), v)))
            .collect();
        for o in self.occupants.values_mut() {
            o.present = false;
            o.vote = None;
        }
        let Some(day) = self.day else { return };
        if present.is_empty() {
            return;
        }
        let votes: Vec<f64> = present.iter().map(|(_, v)| *v).collect();
        let inc = award_points(&votes, &rules.game);
        for ((id, _), p) in present.iter().zip(&inc) {
            self.occupants.get_mut(id).expect("roster").points += p;
        }
        self.rounds.push(RoundRecord {
            day,
            votes: present.iter().cloned().collect(),
            increments: present.iter().map(|(k, _)| k.clone()).zip(inc).collect(),
        });
    }
}
