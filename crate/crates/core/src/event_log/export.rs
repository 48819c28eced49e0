//! Tabular export of session logs: trials, gaze, questionnaire and sessions
//! tables with fixed column schemas.

use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::{LogError, ReplayedSession};
use crate::controller::FeedbackMode;
use crate::gaze::GazeSample;
use crate::session::{QuestionnaireResponse, SessionConfig};
use crate::task::{DurationClass, Key, StimulusShape, TrialOutcome};

pub const TRIALS_CSV: &str = "trials.csv";
pub const GAZE_CSV: &str = "gaze.csv";
pub const QUESTIONNAIRE_CSV: &str = "questionnaire.csv";
pub const SESSIONS_CSV: &str = "sessions.csv";

/// Everything the analysis needs from one session, from either the live
/// service state or a replayed log.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionData {
    pub participant: String,
    pub session: u8,
    pub config: SessionConfig,
    /// Task interval: first trial start to last trial scoring.
    pub start_ts: u64,
    pub end_ts: u64,
    pub shapes: Vec<StimulusShape>,
    pub outcomes: Vec<TrialOutcome>,
    pub gaze: Vec<GazeSample>,
    pub questionnaire: Option<QuestionnaireResponse>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub participant: String,
    pub session: u8,
    pub feedback: FeedbackMode,
    pub duration: DurationClass,
    pub distraction: bool,
    pub trial: u8,
    pub shape: StimulusShape,
    pub responded: bool,
    pub key: Option<Key>,
    pub rt_ms: Option<u64>,
    pub correct: bool,
    pub missed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazeRow {
    pub participant: String,
    pub session: u8,
    pub ts_ms: u64,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub valid: bool,
}

impl GazeRow {
    pub fn sample(&self) -> GazeSample {
        match (self.x, self.y) {
            (Some(x), Some(y)) => GazeSample { ts_ms: self.ts_ms, x, y, valid: self.valid },
            _ => GazeSample::dropout(self.ts_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireRow {
    pub participant: String,
    pub session: u8,
    pub q1: u8,
    pub q2: u8,
    pub q3: u8,
    pub q4: u8,
    pub q5: u8,
    pub q6: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRow {
    pub participant: String,
    pub session: u8,
    pub feedback: FeedbackMode,
    pub duration: DurationClass,
    pub distraction: bool,
    pub start_ts: u64,
    pub end_ts: u64,
}

impl SessionRow {
    pub fn config(&self) -> SessionConfig {
        SessionConfig { feedback: self.feedback, duration: self.duration, distraction: self.distraction }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tables {
    pub trials: Vec<TrialRow>,
    pub gaze: Vec<GazeRow>,
    pub questionnaire: Vec<QuestionnaireRow>,
    pub sessions: Vec<SessionRow>,
}

fn write_table<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), LogError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_table<T: DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<T>, LogError> {
    let mut r = csv::Reader::from_path(path)?;
    let got: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if got != header {
        return Err(LogError::Table(format!("{}: expected columns {header:?}, found {got:?}", path.display())));
    }
    r.deserialize().map(|row| row.map_err(LogError::from)).collect()
}

pub const TRIAL_COLUMNS: [&str; 12] = [
    "participant", "session", "feedback", "duration", "distraction", "trial", "shape", "responded",
    "key", "rt_ms", "correct", "missed",
];
pub const GAZE_COLUMNS: [&str; 6] = ["participant", "session", "ts_ms", "x", "y", "valid"];
pub const QUESTIONNAIRE_COLUMNS: [&str; 8] =
    ["participant", "session", "q1", "q2", "q3", "q4", "q5", "q6"];
pub const SESSION_COLUMNS: [&str; 7] =
    ["participant", "session", "feedback", "duration", "distraction", "start_ts", "end_ts"];

impl Tables {
    pub fn from_sessions<'a>(sessions: impl IntoIterator<Item = &'a SessionData>) -> Self {
        let mut t = Tables::default();
        for s in sessions {
            t.push(s);
        }
        t.sort();
        t
    }

    fn push(&mut self, s: &SessionData) {
        let c = s.config;
        self.sessions.push(SessionRow {
            participant: s.participant.clone(),
            session: s.session,
            feedback: c.feedback,
            duration: c.duration,
            distraction: c.distraction,
            start_ts: s.start_ts,
            end_ts: s.end_ts,
        });
        for (i, (shape, o)) in s.shapes.iter().zip(&s.outcomes).enumerate() {
            self.trials.push(TrialRow {
                participant: s.participant.clone(),
                session: s.session,
                feedback: c.feedback,
                duration: c.duration,
                distraction: c.distraction,
                trial: i as u8,
                shape: *shape,
                responded: o.responded,
                key: o.key,
                rt_ms: o.rt_ms,
                correct: o.correct,
                missed: o.missed,
            });
        }
        for g in &s.gaze {
            let finite = |v: f64| v.is_finite().then_some(v);
            self.gaze.push(GazeRow {
                participant: s.participant.clone(),
                session: s.session,
                ts_ms: g.ts_ms,
                x: finite(g.x),
                y: finite(g.y),
                valid: g.valid,
            });
        }
        if let Some(q) = s.questionnaire {
            self.questionnaire.push(QuestionnaireRow {
                participant: s.participant.clone(),
                session: s.session,
                q1: q.q1,
                q2: q.q2,
                q3: q.q3,
                q4: q.q4,
                q5: q.q5,
                q6: q.q6,
            });
        }
    }

    /// Stable order: participant, session, then trial or timestamp.
    fn sort(&mut self) {
        self.sessions.sort_by(|a, b| (&a.participant, a.session).cmp(&(&b.participant, b.session)));
        self.trials.sort_by(|a, b| (&a.participant, a.session, a.trial).cmp(&(&b.participant, b.session, b.trial)));
        self.gaze.sort_by(|a, b| (&a.participant, a.session, a.ts_ms).cmp(&(&b.participant, b.session, b.ts_ms)));
        self.questionnaire.sort_by(|a, b| (&a.participant, a.session).cmp(&(&b.participant, b.session)));
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), LogError> {
        fs::create_dir_all(dir)?;
        write_table(&dir.join(TRIALS_CSV), &self.trials, &TRIAL_COLUMNS)?;
        write_table(&dir.join(GAZE_CSV), &self.gaze, &GAZE_COLUMNS)?;
        write_table(&dir.join(QUESTIONNAIRE_CSV), &self.questionnaire, &QUESTIONNAIRE_COLUMNS)?;
        write_table(&dir.join(SESSIONS_CSV), &self.sessions, &SESSION_COLUMNS)?;
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self, LogError> {
        Ok(Tables {
            trials: read_table(&dir.join(TRIALS_CSV), &TRIAL_COLUMNS)?,
            gaze: read_table(&dir.join(GAZE_CSV), &GAZE_COLUMNS)?,
            questionnaire: read_table(&dir.join(QUESTIONNAIRE_CSV), &QUESTIONNAIRE_COLUMNS)?,
            sessions: read_table(&dir.join(SESSIONS_CSV), &SESSION_COLUMNS)?,
        })
    }

    pub fn is_table_dir(dir: &Path) -> bool {
        dir.join(TRIALS_CSV).is_file() && dir.join(SESSIONS_CSV).is_file()
    }
}

/// Replays every session (checking it against the live record) and
/// tabulates the result.
pub fn export_csv(sessions: &[ReplayedSession]) -> Result<Tables, LogError> {
    let data = sessions
        .iter()
        .map(|s| {
            s.verify()?;
            s.to_session_data()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Tables::from_sessions(&data))
}
