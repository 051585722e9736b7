//! The live game: logins, votes, daily point awards and the lottery.
//!
//! Every mutation is validated, appended to the event log, then applied to
//! the in-memory state, all under one lock, so log order is the order of
//! truth. Reads clone a consistent snapshot under the same lock.

pub mod log;
pub mod state;

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use chrono::{DateTime, FixedOffset, NaiveDate, NaiveTime};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::GameConfig;
use crate::pipeline::ingest::{sort_records, write_votes};
use crate::pipeline::VoteRecord;
pub use log::{EventLog, LogLine, Snapshot};
pub use state::{draw_winners, award_points, Event, GameState, LotteryRecord, RoundRecord, Rules};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServiceError {
    #[error("invalid service config: {0}")]
    Config(String),
    #[error("unknown or missing token")]
    Unauthorized,
    #[error("admin token required")]
    Forbidden,
    #[error("unknown occupant '{0}'")]
    UnknownOccupant(String),
    #[error("value {0} outside [0, 100]")]
    VoteRange(f64),
    #[error("occupant '{0}' has not logged in today")]
    NotPresent(String),
    #[error("no occupant has points")]
    NoPoints,
    #[error("event belongs to presence day {got}, before the open day {open}")]
    ClockSkew { open: NaiveDate, got: NaiveDate },
    #[error("event log: {0}")]
    Log(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccupantAccount {
    pub id: String,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub rho: f64,
    pub baseline: f64,
    /// Standing vote given to occupants on their first login of the day.
    pub default_level: f64,
    pub timezone: String,
    /// Local `HH:MM` from which activity counts toward the next day.
    pub cutoff: String,
    pub lottery_winners: usize,
    /// Write a snapshot every this many events; 0 disables snapshots.
    pub snapshot_every: u64,
    pub admin_token: String,
    pub occupants: Vec<OccupantAccount>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            rho: 100.0,
            baseline: 90.0,
            default_level: 20.0,
            timezone: "America/Los_Angeles".into(),
            cutoff: "23:59".into(),
            lottery_winners: 3,
            snapshot_every: 100,
            admin_token: String::new(),
            occupants: Vec::new(),
        }
    }
}

impl ServiceConfig {
    pub fn rules(&self) -> Result<Rules, ServiceError> {
        let game = GameConfig::new(self.rho, self.baseline).map_err(|e| ServiceError::Config(e.to_string()))?;
        let tz: Tz = self
            .timezone
            .parse()
            .map_err(|_| ServiceError::Config(format!("unknown timezone '{}'", self.timezone)))?;
        let cutoff = NaiveTime::parse_from_str(&self.cutoff, "%H:%M")
            .or_else(|_| NaiveTime::parse_from_str(&self.cutoff, "%H:%M:%S"))
            .map_err(|_| ServiceError::Config(format!("bad cutoff '{}'", self.cutoff)))?;
        if !(0.0..=100.0).contains(&self.default_level) {
            return Err(ServiceError::Config(format!("default_level {} outside [0, 100]", self.default_level)));
        }
        if self.lottery_winners == 0 {
            return Err(ServiceError::Config("lottery_winners must be at least 1".into()));
        }
        Ok(Rules {
            game,
            tz,
            cutoff,
            winners: self.lottery_winners,
        })
    }

    fn tokens(&self) -> Result<HashMap<String, Principal>, ServiceError> {
        let mut map = HashMap::new();
        if self.admin_token.is_empty() {
            return Err(ServiceError::Config("admin_token is empty".into()));
        }
        map.insert(self.admin_token.clone(), Principal::Admin);
        let mut ids = std::collections::HashSet::new();
        for a in &self.occupants {
            if a.id.is_empty() || a.token.is_empty() {
                return Err(ServiceError::Config("occupant id and token must be non-empty".into()));
            }
            if !ids.insert(a.id.clone()) {
                return Err(ServiceError::Config(format!("duplicate occupant '{}'", a.id)));
            }
            if map.insert(a.token.clone(), Principal::Occupant(a.id.clone())).is_some() {
                return Err(ServiceError::Config(format!("token of '{}' is not unique", a.id)));
            }
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Principal {
    Occupant(String),
    Admin,
}

/// Result of a mutation: the log position it was committed at and the
/// implemented setting right after it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Receipt {
    pub seq: u64,
    pub implemented: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupantView {
    pub id: String,
    pub present: bool,
    pub vote: Option<f64>,
    pub points: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub seq: u64,
    pub day: Option<NaiveDate>,
    pub default_level: f64,
    pub pending_default: Option<f64>,
    pub implemented: Option<f64>,
    pub occupants: Vec<OccupantView>,
}

impl From<&GameState> for StateView {
    fn from(s: &GameState) -> Self {
        Self {
            seq: s.seq,
            day: s.day,
            default_level: s.default_level,
            pending_default: s.pending_default,
            implemented: s.implemented(),
            occupants: s
                .occupants
                .iter()
                .map(|(id, o)| OccupantView {
                    id: id.clone(),
                    present: o.present,
                    vote: o.vote,
                    points: o.points,
                })
                .collect(),
        }
    }
}

struct Inner {
    state: GameState,
    log: Option<EventLog>,
}

pub struct GameService {
    rules: Rules,
    tokens: HashMap<String, Principal>,
    snapshot_every: u64,
    inner: Mutex<Inner>,
}

/// Replays `events` on top of `state`.
pub fn replay(mut state: GameState, events: &[Event], rules: &Rules) -> Result<GameState, ServiceError> {
    for e in events {
        state.apply(e, rules)?;
    }
    Ok(state)
}

impl GameService {
    /// A service without persistence.
    pub fn in_memory(cfg: &ServiceConfig) -> Result<Self, ServiceError> {
        let state = Self::initial_state(cfg);
        Self::build(cfg, state, None)
    }

    /// Opens (or creates) the event log at `path` and recovers the state
    /// from the latest snapshot plus the events after it.
    pub fn open(cfg: &ServiceConfig, path: &Path) -> Result<Self, ServiceError> {
        let rules = cfg.rules()?;
        let (log, events) = EventLog::open(path)?;
        let state = match log::read_snapshot(path)? {
            Some(s) if s.seq <= events.len() as u64 => {
                replay(s.state, &events[s.seq as usize..], &rules)?
            }
            Some(s) => {
                ::log::warn!(
                    "snapshot at seq {} is ahead of the log ({} events); replaying from start",
                    s.seq,
                    events.len()
                );
                replay(Self::initial_state(cfg), &events, &rules)?
            }
            None => replay(Self::initial_state(cfg), &events, &rules)?,
        };
        Self::build(cfg, state, Some(log))
    }

    pub fn initial_state(cfg: &ServiceConfig) -> GameState {
        let ids: Vec<String> = cfg.occupants.iter().map(|a| a.id.clone()).collect();
        GameState::new(&ids, cfg.default_level)
    }

    fn build(cfg: &ServiceConfig, state: GameState, log: Option<EventLog>) -> Result<Self, ServiceError> {
        Ok(Self {
            rules: cfg.rules()?,
            tokens: cfg.tokens()?,
            snapshot_every: cfg.snapshot_every,
            inner: Mutex::new(Inner { state, log }),
        })
    }

    pub fn rules(&self) -> &Rules {
        &self.rules
    }

    pub fn authenticate(&self, token: &str) -> Result<Principal, ServiceError> {
        self.tokens.get(token).cloned().ok_or(ServiceError::Unauthorized)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Check, persist, apply. Nothing changes if any step fails.
    fn commit(&self, inner: &mut Inner, event: Event) -> Result<Receipt, ServiceError> {
        inner.state.check(&event, &self.rules)?;
        if let Some(log) = inner.log.as_mut() {
            log.append(&event)?;
        }
        inner.state.apply(&event, &self.rules)?;
        if let Some(log) = inner.log.as_ref() {
            if self.snapshot_every > 0 && inner.state.seq % self.snapshot_every == 0 {
                log.write_snapshot(&inner.state)?;
            }
        }
        Ok(Receipt {
            seq: inner.state.seq,
            implemented: inner.state.implemented(),
        })
    }

    fn occupant(who: &Principal) -> Result<&str, ServiceError> {
        match who {
            Principal::Occupant(id) => Ok(id),
            Principal::Admin => Err(ServiceError::Forbidden),
        }
    }

    fn admin(who: &Principal) -> Result<(), ServiceError> {
        match who {
            Principal::Admin => Ok(()),
            Principal::Occupant(_) => Err(ServiceError::Forbidden),
        }
    }

    /// Marks the occupant present for the presence day of `at`. A repeat
    /// login on the same day changes nothing and logs nothing.
    pub fn login(&self, who: &Principal, at: DateTime<FixedOffset>) -> Result<Receipt, ServiceError> {
        let id = Self::occupant(who)?;
        let mut inner = self.lock();
        let day = self.rules.presence_day(&at);
        let present = inner.state.occupants.get(id).is_some_and(|o| o.present);
        if present && inner.state.day == Some(day) {
            return Ok(Receipt {
                seq: inner.state.seq,
                implemented: inner.state.implemented(),
            });
        }
        self.commit(
            &mut inner,
            Event::Login {
                occupant: id.to_string(),
                at,
            },
        )
    }

    pub fn cast_vote(&self, who: &Principal, value: f64, at: DateTime<FixedOffset>) -> Result<Receipt, ServiceError> {
        let id = Self::occupant(who)?;
        if !value.is_finite() || !(0.0..=100.0).contains(&value) {
            return Err(ServiceError::VoteRange(value));
        }
        let mut inner = self.lock();
        self.commit(
            &mut inner,
            Event::Vote {
                occupant: id.to_string(),
                value,
                at,
            },
        )
    }

    pub fn set_default(&self, who: &Principal, level: f64, at: DateTime<FixedOffset>) -> Result<Receipt, ServiceError> {
        Self::admin(who)?;
        if !level.is_finite() {
            return Err(ServiceError::VoteRange(level));
        }
        let mut inner = self.lock();
        self.commit(&mut inner, Event::SetDefault { level, at })
    }

    /// Closes the open round now. Returns the round if anyone was present.
    pub fn award(&self, who: &Principal, at: DateTime<FixedOffset>) -> Result<Option<RoundRecord>, ServiceError> {
        Self::admin(who)?;
        let mut inner = self.lock();
        let before = inner.state.rounds.len();
        self.commit(&mut inner, Event::Award { at })?;
        Ok(inner.state.rounds[before..].last().cloned())
    }

    /// Draws the configured number of winners from the points as they stand
    /// at `at` (after closing a round that `at` ends), optionally zeroing all
    /// points afterwards.
    pub fn draw_lottery(
        &self,
        who: &Principal,
        seed: u64,
        reset: bool,
        at: DateTime<FixedOffset>,
    ) -> Result<LotteryRecord, ServiceError> {
        Self::admin(who)?;
        let mut inner = self.lock();
        let mut probe = inner.state.clone();
        probe.roll_to(self.rules.presence_day(&at), &self.rules);
        let winners = draw_winners(&probe.points(), self.rules.winners, seed)?;
        self.commit(
            &mut inner,
            Event::Lottery {
                seed,
                winners,
                reset,
                at,
            },
        )?;
        Ok(inner.state.lotteries.last().cloned().expect("just recorded"))
    }

    pub fn state(&self) -> StateView {
        StateView::from(&self.lock().state)
    }

    pub fn snapshot(&self) -> GameState {
        self.lock().state.clone()
    }

    pub fn points(&self) -> Vec<(String, f64)> {
        self.lock().state.points().into_iter().collect()
    }

    /// Vote-log rows for every login (the default vote) and every vote.
    pub fn export_records(&self) -> Vec<VoteRecord> {
        let state = self.snapshot();
        let mut records: Vec<VoteRecord> = state
            .votes
            .iter()
            .map(|v| VoteRecord {
                timestamp: v.at,
                occupant_id: v.occupant.clone(),
                vote: v.value,
                is_default: v.is_default,
                session_start: false,
            })
            .collect();
        sort_records(&mut records);
        records
    }

    pub fn export_log(&self, out: impl Write) -> std::io::Result<()> {
        write_votes(out, &self.export_records())
    }
}
