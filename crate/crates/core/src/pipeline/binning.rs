//! Folding raw votes into per-(day, region) rounds.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate, NaiveTime};
use chrono_tz::Tz;

use super::ingest::VoteRecord;
use crate::game::{Role, VoteProfile};
use crate::observation::{Observation, ObservationSet, Region};

/// Night runs past midnight, so times before 05:00 belong to the previous
/// day's Night round.
pub fn day_and_region(date: NaiveDate, time: NaiveTime) -> (NaiveDate, Region) {
    let region = Region::of_time(time);
    if region == Region::Night && time < NaiveTime::from_hms_opt(5, 0, 0).unwrap() {
        (date - Duration::days(1), region)
    } else {
        (date, region)
    }
}

#[derive(Default)]
struct Cell {
    sum: f64,
    count: usize,
    all_default: bool,
}

/// Each occupant's votes inside a (day, region) window are averaged; the
/// occupant counts as a default player there only if every folded vote was a
/// default. Occupants without votes in a window are absent from that round.
pub fn bin_day_regions(records: &[VoteRecord], tz: Tz) -> ObservationSet {
    let mut roster: Vec<String> = records.iter().map(|r| r.occupant_id.clone()).collect();
    roster.sort();
    roster.dedup();

    let mut cells: BTreeMap<(NaiveDate, Region), BTreeMap<usize, Cell>> = BTreeMap::new();
    for r in records {
        let local = r.timestamp.with_timezone(&tz);
        let key = day_and_region(local.date_naive(), local.time());
        let who = roster.binary_search(&r.occupant_id).expect("roster built from records");
        let cell = cells.entry(key).or_default().entry(who).or_insert(Cell {
            all_default: true,
            ..Cell::default()
        });
        cell.sum += r.vote;
        cell.count += 1;
        cell.all_default &= r.is_default;
    }

    let observations = cells
        .into_iter()
        .map(|((day, region), people)| {
            let mut votes = vec![0.0; roster.len()];
            let mut roles = vec![Role::Absent; roster.len()];
            let mut record_count = 0;
            for (who, cell) in people {
                votes[who] = cell.sum / cell.count as f64;
                roles[who] = if cell.all_default { Role::Default } else { Role::Active };
                record_count += cell.count;
            }
            Observation {
                day,
                region,
                default_level: None,
                profile: VoteProfile { votes, roles },
                record_count,
            }
        })
        .collect();
    ObservationSet {
        roster,
        observations,
    }
}
