//! Append-only JSON Lines event log, one file per participant session.
//!
//! Every record carries the service-clock timestamp, the participant, the
//! session index, a kind tag and a structured payload. Timestamps never
//! decrease within a file; the writer refuses records that would break that.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::controller::FilterParams;
use crate::session::{QuestionnaireResponse, SessionConfig};
use crate::task::{Key, StimulusShape, TrialOutcome, TrialSpec};

pub mod export;
pub mod replay;

pub use export::{export_csv, SessionData, Tables};
pub use replay::{replay, replay_file, ReplayedSession};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("record at {got} ms would precede last record at {last} ms")]
    Ordering { last: u64, got: u64 },
    #[error("line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("replay mismatch: {0}")]
    Mismatch(String),
    #[error("incomplete session log: {0}")]
    Incomplete(String),
    #[error("table error: {0}")]
    Table(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Record kind tags.
pub mod kind {
    pub const SESSION_START: &str = "session_start";
    pub const PHASE: &str = "phase";
    pub const CALIBRATION_POINT: &str = "calibration_point";
    pub const CALIBRATION_DONE: &str = "calibration_done";
    pub const GAZE: &str = "gaze";
    pub const INTENT: &str = "intent";
    pub const KEY: &str = "key";
    pub const TRIAL_ONSET: &str = "trial_onset";
    pub const TRIAL_RESULT: &str = "trial_result";
    pub const QUESTIONNAIRE: &str = "questionnaire";
    pub const REJECTED: &str = "rejected";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub ts_ms: u64,
    pub participant: String,
    pub session: u8,
    pub kind: String,
    pub payload: Value,
}

impl EventRecord {
    pub fn new<P: Serialize>(
        ts_ms: u64,
        participant: &str,
        session: u8,
        kind: &str,
        payload: &P,
    ) -> Self {
        Self {
            ts_ms,
            participant: participant.to_owned(),
            session,
            kind: kind.to_owned(),
            payload: serde_json::to_value(payload).expect("payload types serialize"),
        }
    }

    pub fn payload_as<T: for<'de> Deserialize<'de>>(&self) -> Result<T, serde_json::Error> {
        T::deserialize(&self.payload)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }
}

/// Everything needed to re-run a session offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStartPayload {
    #[serde(flatten)]
    pub config: SessionConfig,
    pub trial_seed: u64,
    pub filter: FilterParams,
    pub window_ms: u64,
    pub plan: Vec<TrialSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointPayload {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountPayload {
    pub count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GazePayload {
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub valid: bool,
    pub client_ts_ms: u64,
    /// Whether the sample was fed to the controller.
    pub routed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntentPayload {
    pub site: crate::gaze::BodySite,
    pub active: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyPayload {
    pub key: Key,
    pub client_ts_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOnsetPayload {
    pub index: u8,
    pub shape: StimulusShape,
    pub window_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialResultPayload {
    pub index: u8,
    pub outcome: TrialOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedPayload {
    pub code: String,
    pub detail: String,
}

pub type QuestionnairePayload = QuestionnaireResponse;

/// Appends records to one file, enforcing non-decreasing timestamps.
pub struct EventLogWriter {
    path: PathBuf,
    out: BufWriter<File>,
    last_ts: Option<u64>,
}

impl EventLogWriter {
    /// Opens for append. An existing file is scanned so ordering holds across
    /// reopenings.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LogError> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let last_ts = if path.exists() { read_log(&path)?.last().map(|r| r.ts_ms) } else { None };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self { path, out: BufWriter::new(file), last_ts })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &EventRecord) -> Result<(), LogError> {
        if let Some(last) = self.last_ts {
            if record.ts_ms < last {
                return Err(LogError::Ordering { last, got: record.ts_ms });
            }
        }
        let mut line = record.to_line();
        line.push('\n');
        self.out.write_all(line.as_bytes())?;
        self.last_ts = Some(record.ts_ms);
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), LogError> {
        self.out.flush()?;
        Ok(())
    }

    /// Flushes buffered lines and syncs them to disk.
    pub fn sync(&mut self) -> Result<(), LogError> {
        self.out.flush()?;
        self.out.get_ref().sync_data()?;
        Ok(())
    }
}

impl Drop for EventLogWriter {
    fn drop(&mut self) {
        let _ = self.out.flush();
    }
}

pub fn parse_lines<R: BufRead>(reader: R) -> Result<Vec<EventRecord>, LogError> {
    let mut records = Vec::new();
    let mut last: Option<u64> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EventRecord = serde_json::from_str(&line)
            .map_err(|e| LogError::Corrupt { line: line_no, reason: e.to_string() })?;
        if let Some(prev) = last {
            if rec.ts_ms < prev {
                return Err(LogError::Corrupt {
                    line: line_no,
                    reason: format!("timestamp {} precedes {}", rec.ts_ms, prev),
                });
            }
        }
        last = Some(rec.ts_ms);
        records.push(rec);
    }
    Ok(records)
}

pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<EventRecord>, LogError> {
    parse_lines(BufReader::new(File::open(path)?))
}

/// Canonical location of a session file under a log directory.
pub fn session_log_path(dir: &Path, participant: &str, session: u8) -> PathBuf {
    dir.join(participant).join(format!("session_{session:02}.jsonl"))
}

/// Writes records to per-session files below `dir`, creating writers lazily.
pub struct LogSet {
    dir: PathBuf,
    writers: std::collections::BTreeMap<(String, u8), EventLogWriter>,
}

impl LogSet {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), writers: Default::default() }
    }

    pub fn append(&mut self, record: &EventRecord) -> Result<(), LogError> {
        let key = (record.participant.clone(), record.session);
        if !self.writers.contains_key(&key) {
            let w = EventLogWriter::open(session_log_path(&self.dir, &key.0, key.1))?;
            self.writers.insert(key.clone(), w);
        }
        self.writers.get_mut(&key).expect("inserted").append(record)
    }

    pub fn flush(&mut self) -> Result<(), LogError> {
        self.writers.values_mut().try_for_each(EventLogWriter::flush)
    }

    pub fn sync(&mut self) -> Result<(), LogError> {
        self.writers.values_mut().try_for_each(EventLogWriter::sync)
    }
}

/// All `*.jsonl` files below `dir`, sorted by path.
pub fn find_logs(dir: &Path) -> Result<Vec<PathBuf>, LogError> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "jsonl") {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn rec(ts: u64, kind: &str) -> EventRecord {
        EventRecord::new(ts, "p01", 0, kind, &json!({"v": ts}))
    }

    #[test]
    fn append_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let mut w = EventLogWriter::open(&path).unwrap();
        w.append(&rec(1, "a")).unwrap();
        w.append(&rec(1, "b")).unwrap();
        w.append(&rec(5, "c")).unwrap();
        w.sync().unwrap();
        let back = read_log(&path).unwrap();
        assert_eq!(back, vec![rec(1, "a"), rec(1, "b"), rec(5, "c")]);
    }

    #[test]
    fn ordering_violation_leaves_file_unchanged() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let mut w = EventLogWriter::open(&path).unwrap();
        w.append(&rec(10, "a")).unwrap();
        w.sync().unwrap();
        let before = fs::read(&path).unwrap();
        assert!(matches!(w.append(&rec(9, "b")), Err(LogError::Ordering { last: 10, got: 9 })));
        w.sync().unwrap();
        assert_eq!(fs::read(&path).unwrap(), before);
    }

    #[test]
    fn reopen_keeps_ordering() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        {
            let mut w = EventLogWriter::open(&path).unwrap();
            w.append(&rec(10, "a")).unwrap();
        }
        let mut w = EventLogWriter::open(&path).unwrap();
        assert!(w.append(&rec(3, "b")).is_err());
        w.append(&rec(11, "b")).unwrap();
        drop(w);
        assert_eq!(read_log(&path).unwrap().len(), 2);
    }

    #[test]
    fn corrupt_line_is_reported_by_number() {
        let text = format!("{}\n{{\"ts_ms\": 2, \"partic\n{}\n", rec(1, "a").to_line(), rec(3, "c").to_line());
        match parse_lines(text.as_bytes()) {
            Err(LogError::Corrupt { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_log_parses_to_nothing() {
        assert!(parse_lines(&b""[..]).unwrap().is_empty());
    }

    #[test]
    fn log_set_routes_by_session() {
        let dir = tempfile::tempdir().unwrap();
        let mut set = LogSet::new(dir.path());
        let mut a = rec(1, "a");
        let mut b = rec(2, "b");
        b.session = 3;
        a.participant = "p02".into();
        set.append(&a).unwrap();
        set.append(&b).unwrap();
        set.sync().unwrap();
        let files = find_logs(dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        assert!(files[0].ends_with("p01/session_03.jsonl"));
        assert!(files[1].ends_with("p02/session_00.jsonl"));
    }
}
