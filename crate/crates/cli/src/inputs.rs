//! Loading vote logs and default schedules from the command line's paths.

use std::path::Path;

use chrono_tz::Tz;
use socialgame::game::GameConfig;
use socialgame::pipeline::ingest::{ingest_votes, local_date};
use socialgame::pipeline::periods::DefaultPeriod;
use socialgame::pipeline::{bin_day_regions, segment_default_periods, DefaultSchedule};
use socialgame::ObservationSet;

use crate::{CliError, DataArgs, GameArgs, Result};

pub struct Loaded {
    pub set: ObservationSet,
    pub schedule: DefaultSchedule,
    /// Where the schedule came from, for the manifest.
    pub schedule_source: String,
    pub records: usize,
    pub skipped_rows: usize,
}

pub fn timezone(name: &str) -> Result<Tz> {
    name.parse().map_err(|_| CliError::Usage(format!("unknown timezone '{name}'")))
}

pub fn game_config(g: &GameArgs) -> Result<GameConfig> {
    GameConfig::new(g.rho, g.baseline).map_err(|e| CliError::Usage(e.to_string()))
}

pub fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Data(format!("{}: no such file", path.display())))
    }
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn load(d: &DataArgs) -> Result<Loaded> {
    let tz = timezone(&d.timezone)?;
    require_file(&d.votes)?;
    if let Some(p) = &d.periods {
        require_file(p)?;
    }
    let report = ingest_votes(&d.votes, tz, d.lenient).map_err(|e| CliError::Data(e.to_string()))?;
    for w in &report.warnings {
        log::warn!("{}: {w}", d.votes.display());
    }
    for r in &report.rejected {
        log::warn!("{}: skipped line {}: {}", d.votes.display(), r.line, r.message);
    }
    if report.records.is_empty() {
        return Err(CliError::Data(format!("{}: no usable vote records", d.votes.display())));
    }
    let mut set = bin_day_regions(&report.records, tz);
    let (schedule, schedule_source) = match (&d.periods, d.default_level) {
        (Some(p), _) => {
            let file = std::fs::File::open(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            let s = DefaultSchedule::from_csv(file).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            (s, p.display().to_string())
        }
        (None, Some(level)) => {
            let days = set.days();
            let first = local_date(&report.records[0].timestamp, tz).min(days[0]);
            let last = *days.last().expect("records produce days");
            let s = DefaultSchedule::new(vec![DefaultPeriod {
                start: first,
                end: last,
                default_level: level,
            }])
            .map_err(|e| CliError::Usage(e.to_string()))?;
            (s, format!("constant {level}"))
        }
        (None, None) => (DefaultSchedule::study_2014(), "built-in 2014".into()),
    };
    segment_default_periods(&mut set, &schedule).map_err(|e| CliError::Data(e.to_string()))?;
    Ok(Loaded {
        set,
        schedule,
        schedule_source,
        records: report.records.len(),
        skipped_rows: report.rejected.len(),
    })
}
