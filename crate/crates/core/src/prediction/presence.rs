//! Per-occupant empirical distribution over {absent, present-default,
//! present-active}.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::game::Role;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresenceEntry {
    pub occupant: usize,
    pub n_absent: usize,
    pub n_default: usize,
    pub n_active: usize,
    pub p_absent: f64,
    pub p_default: f64,
    pub p_active: f64,
}

impl PresenceEntry {
    pub fn from_counts(occupant: usize, n_absent: usize, n_default: usize, n_active: usize) -> Self {
        let total = (n_absent + n_default + n_active) as f64;
        Self {
            occupant,
            n_absent,
            n_default,
            n_active,
            p_absent: n_absent as f64 / total,
            p_default: n_default as f64 / total,
            p_active: n_active as f64 / total,
        }
    }

    pub fn total(&self) -> usize {
        self.n_absent + self.n_default + self.n_active
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Role {
        let u: f64 = rng.random();
        if u < self.p_absent {
            Role::Absent
        } else if u < self.p_absent + self.p_default {
            Role::Default
        } else {
            Role::Active
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PresenceModel {
    /// Indexed by occupant; `None` for occupants without history.
    pub entries: Vec<Option<PresenceEntry>>,
}

impl PresenceModel {
    /// Occupants that had no history to fit.
    pub fn excluded(&self) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.is_none())
            .map(|(i, _)| i)
            .collect()
    }

    /// Draws a role for every occupant; unmodeled occupants are absent.
    pub fn sample_roles(&self, rng: &mut impl Rng) -> Vec<Role> {
        self.entries
            .iter()
            .map(|e| e.as_ref().map_or(Role::Absent, |e| e.sample(rng)))
            .collect()
    }
}

/// `history[i]` lists occupant `i`'s daily states.
pub fn fit_presence(history: &[Vec<Role>]) -> PresenceModel {
    let entries = history
        .iter()
        .enumerate()
        .map(|(i, days)| {
            if days.is_empty() {
                return None;
            }
            let count = |r: Role| days.iter().filter(|d| **d == r).count();
            Some(PresenceEntry::from_counts(
                i,
                count(Role::Absent),
                count(Role::Default),
                count(Role::Active),
            ))
        })
        .collect();
    PresenceModel { entries }
}
