//! Append-only event log with periodic snapshots.
//!
//! Format, version 1: the first line is `{"format":"socialgame-events","version":1}`,
//! every further line is `{"seq":N,"event":{...}}` with `seq` counting from 1.
//! A snapshot file next to the log holds `{"seq":N,"state":{...}}`, the state
//! after event `N`; recovery loads it and replays the events after `N`.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::state::{Event, GameState};
use super::ServiceError;

pub const LOG_FORMAT: &str = "socialgame-events";
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub seq: u64,
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub seq: u64,
    pub state: GameState,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Log(format!("{}: {e}", path.display()))
}

pub fn snapshot_path(log: &Path) -> PathBuf {
    let mut name = log.file_name().unwrap_or_default().to_os_string();
    name.push(".snapshot.json");
    log.with_file_name(name)
}

pub struct EventLog {
    path: PathBuf,
    file: File,
    next_seq: u64,
}

impl EventLog {
    /// Opens or creates the log and returns the events already in it. A
    /// torn final line (no trailing newline, unparseable) is dropped.
    pub fn open(path: &Path) -> Result<(Self, Vec<Event>), ServiceError> {
        let mut events = Vec::new();
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            let mut good_len = 0;
            let mut lines = text.split_inclusive('\n').peekable();
            match lines.next() {
                Some(first) => {
                    let h: Header = serde_json::from_str(first.trim_end())
                        .map_err(|e| io_err(path, format!("bad header: {e}")))?;
                    if h.format != LOG_FORMAT || h.version != LOG_VERSION {
                        return Err(io_err(path, format!("unsupported log {} v{}", h.format, h.version)));
                    }
                    good_len += first.len();
                }
                None => {}
            }
            while let Some(line) = lines.next() {
                let last = lines.peek().is_none();
                match serde_json::from_str::<LogLine>(line.trim_end()) {
                    Ok(l) if l.seq == events.len() as u64 + 1 => {
                        events.push(l.event);
                        good_len += line.len();
                    }
                    Ok(l) => {
                        return Err(io_err(path, format!("expected seq {}, found {}", events.len() + 1, l.seq)));
                    }
                    Err(_) if last && !line.ends_with('\n') => {
                        log::warn!("{}: dropping torn final line", path.display());
                    }
                    Err(e) => return Err(io_err(path, format!("line {}: {e}", events.len() + 2))),
                }
            }
            let file = OpenOptions::new().write(true).open(path).map_err(|e| io_err(path, e))?;
            if good_len == 0 {
                file.set_len(0).map_err(|e| io_err(path, e))?;
            } else {
                file.set_len(good_len as u64).map_err(|e| io_err(path, e))?;
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| io_err(path, e))?;
        if file.metadata().map_err(|e| io_err(path, e))?.len() == 0 {
            let header = serde_json::to_string(&Header {
                format: LOG_FORMAT.into(),
                version: LOG_VERSION,
            })
            .expect("header serializes");
            writeln!(file, "{header}").map_err(|e| io_err(path, e))?;
        }
        let next_seq = events.len() as u64 + 1;
        Ok((
            Self {
                path: path.to_path_buf(),
                file,
                next_seq,
            },
            events,
        ))
    }

    pub fn append(&mut self, event: &Event) -> Result<u64, ServiceError> {
        let seq = self.next_seq;
        let line = serde_json::to_string(&LogLine {
            seq,
            event: event.clone(),
        })
        .map_err(|e| io_err(&self.path, e))?;
        self.file
            .write_all(format!("{line}\n").as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| io_err(&self.path, e))?;
        self.next_seq += 1;
        Ok(seq)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes the snapshot atomically (temporary file, then rename).
    pub fn write_snapshot(&self, state: &GameState) -> Result<(), ServiceError> {
        let target = snapshot_path(&self.path);
        let tmp = target.with_extension("tmp");
        let body = serde_json::to_vec(&Snapshot {
            seq: state.seq,
            state: state.clone(),
        })
        .map_err(|e| io_err(&target, e))?;
        std::fs::write(&tmp, body).map_err(|e| io_err(&tmp, e))?;
        std::fs::rename(&tmp, &target).map_err(|e| io_err(&target, e))
    }
}

pub fn read_snapshot(log: &Path) -> Result<Option<Snapshot>, ServiceError> {
    let path = snapshot_path(log);
    if !path.exists() {
        return Ok(None);
    }
    let file = File::open(&path).map_err(|e| io_err(&path, e))?;
    serde_json::from_reader(BufReader::new(file))
        .map(Some)
        .map_err(|e| io_err(&path, e))
}

/// Reads only the events of a log file.
pub fn read_events(path: &Path) -> Result<Vec<Event>, ServiceError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if k == 0 {
            continue;
        }
        let l: LogLine = serde_json::from_str(&line).map_err(|e| io_err(path, format!("line {}: {e}", k + 1)))?;
        out.push(l.event);
    }
    Ok(out)
}
