//! Vote-log reading and writing.
//!
//! Schema: a header row `timestamp,occupant_id,vote,is_default`, then one
//! row per vote. Timestamps are ISO-8601; rows without an offset are read as
//! local time in the configured zone. Export always writes RFC 3339 with an
//! explicit offset and the shortest round-tripping decimal for the vote.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, FixedOffset, LocalResult, NaiveDate, NaiveDateTime, SecondsFormat, TimeZone};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use super::PipelineError;

pub const VOTE_LOG_COLUMNS: [&str; 4] = ["timestamp", "occupant_id", "vote", "is_default"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub timestamp: DateTime<FixedOffset>,
    pub occupant_id: String,
    pub vote: f64,
    /// The vote is the standing default rather than an explicit change.
    pub is_default: bool,
    /// First record of the occupant on its local calendar day.
    pub session_start: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    /// 1-based line number in the file, header included.
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IngestReport {
    /// Sorted by timestamp, ties broken by occupant id.
    pub records: Vec<VoteRecord>,
    pub warnings: Vec<String>,
    /// Rejected rows; non-empty only in lenient mode.
    pub rejected: Vec<RowError>,
}

pub fn ingest_votes(path: &Path, tz: Tz, lenient: bool) -> Result<IngestReport, PipelineError> {
    let file = std::fs::File::open(path).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_votes(file, tz, lenient).map_err(|e| match e {
        PipelineError::EmptyLog(_) => PipelineError::EmptyLog(path.display().to_string()),
        other => other,
    })
}

pub fn parse_votes(reader: impl Read, tz: Tz, lenient: bool) -> Result<IngestReport, PipelineError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| PipelineError::Header(e.to_string()))?
        .clone();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(PipelineError::EmptyLog("<input>".into()));
    }
    let mut index = HashMap::new();
    for (pos, name) in headers.iter().enumerate() {
        if !VOTE_LOG_COLUMNS.contains(&name) {
            return Err(PipelineError::Header(format!("unknown column '{name}'")));
        }
        if index.insert(name.to_string(), pos).is_some() {
            return Err(PipelineError::Header(format!("duplicate column '{name}'")));
        }
    }
    if let Some(missing) = VOTE_LOG_COLUMNS.iter().find(|c| !index.contains_key(**c)) {
        return Err(PipelineError::Header(format!("missing column '{missing}'")));
    }

    let mut records: Vec<(usize, VoteRecord)> = Vec::new();
    let mut errors = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let line = k + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                errors.push(RowError { line, message: e.to_string() });
                continue;
            }
        };
        let field = |name: &str| row.get(index[name]).unwrap_or("");
        match parse_row(field("timestamp"), field("occupant_id"), field("vote"), field("is_default"), tz) {
            Ok(rec) => records.push((line, rec)),
            Err(message) => errors.push(RowError { line, message }),
        }
    }
    if !errors.is_empty() && !lenient {
        return Err(PipelineError::Rows(errors));
    }
    if records.is_empty() && errors.is_empty() {
        return Err(PipelineError::EmptyLog("<input>".into()));
    }

    let mut warnings = Vec::new();
    let mut latest: HashMap<(String, DateTime<FixedOffset>), usize> = HashMap::new();
    let mut keep = vec![true; records.len()];
    for (pos, (line, rec)) in records.iter().enumerate() {
        let key = (rec.occupant_id.clone(), rec.timestamp);
        if let Some(prev) = latest.insert(key, pos) {
            keep[prev] = false;
            warnings.push(format!(
                "line {line}: duplicate vote for occupant '{}' at {}; replaces line {}",
                rec.occupant_id,
                rec.timestamp.to_rfc3339(),
                records[prev].0
            ));
        }
    }
    let mut out: Vec<VoteRecord> = records
        .into_iter()
        .zip(keep)
        .filter_map(|((_, r), k)| k.then_some(r))
        .collect();
    sort_records(&mut out);
    mark_sessions(&mut out, tz);
    Ok(IngestReport {
        records: out,
        warnings,
        rejected: errors,
    })
}

fn parse_row(ts: &str, id: &str, vote: &str, is_default: &str, tz: Tz) -> Result<VoteRecord, String> {
    let timestamp = parse_timestamp(ts, tz)?;
    if id.is_empty() {
        return Err("empty occupant_id".into());
    }
    let vote: f64 = vote.parse().map_err(|_| format!("vote '{vote}' is not a number"))?;
    if !(0.0..=100.0).contains(&vote) {
        return Err(format!("vote {vote} outside [0, 100]"));
    }
    let is_default = match is_default.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => true,
        "false" | "0" | "no" => false,
        other => return Err(format!("is_default '{other}' is not a boolean")),
    };
    Ok(VoteRecord {
        timestamp,
        occupant_id: id.to_string(),
        vote,
        is_default,
        session_start: false,
    })
}

pub fn parse_timestamp(s: &str, tz: Tz) -> Result<DateTime<FixedOffset>, String> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t);
    }
    let naive = ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .ok_or_else(|| format!("unparseable timestamp '{s}'"))?;
    match tz.from_local_datetime(&naive) {
        LocalResult::Single(t) => Ok(t.fixed_offset()),
        LocalResult::Ambiguous(..) => Err(format!("timestamp '{s}' is ambiguous in {tz}")),
        LocalResult::None => Err(format!("timestamp '{s}' does not exist in {tz}")),
    }
}

pub fn sort_records(records: &mut [VoteRecord]) {
    records.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.occupant_id.cmp(&b.occupant_id))
    });
}

/// Local calendar date of a record.
pub fn local_date(t: &DateTime<FixedOffset>, tz: Tz) -> NaiveDate {
    t.with_timezone(&tz).date_naive()
}

fn mark_sessions(records: &mut [VoteRecord], tz: Tz) {
    let mut seen = std::collections::HashSet::new();
    for r in records.iter_mut() {
        r.session_start = seen.insert((r.occupant_id.clone(), local_date(&r.timestamp, tz)));
    }
}

/// Writes records in the vote-log schema.
pub fn write_votes(mut out: impl Write, records: &[VoteRecord]) -> std::io::Result<()> {
    writeln!(out, "{}", VOTE_LOG_COLUMNS.join(","))?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{}",
            r.timestamp.to_rfc3339_opts(SecondsFormat::AutoSi, false),
            csv_field(&r.occupant_id),
            r.vote,
            r.is_default
        )?;
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
