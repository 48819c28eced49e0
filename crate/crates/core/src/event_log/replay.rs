//! Offline reconstruction of a session from its log file.
//!
//! [`replay`] pulls the gaze, key, intent, trial and phase streams back out
//! of the records. [`ReplayedSession::verify`] then re-derives the intent
//! stream with a fresh controller and the trial outcomes with the scorer,
//! and checks both against what was logged live.

use std::path::Path;

use super::{
    kind, read_log, EventRecord, GazePayload, IntentPayload, KeyPayload, LogError,
    SessionStartPayload, TrialOnsetPayload, TrialResultPayload,
};
use crate::controller::{ActuatorIntent, Controller};
use crate::gaze::GazeSample;
use crate::session::{QuestionnaireResponse, SessionPhase};
use crate::task::{score_presses, KeyPress, TrialOutcome};

use super::export::SessionData;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GazeEntry {
    pub ts_ms: u64,
    pub payload: GazePayload,
}

impl GazeEntry {
    pub fn sample(&self) -> GazeSample {
        match (self.payload.x, self.payload.y) {
            (Some(x), Some(y)) => GazeSample { ts_ms: self.ts_ms, x, y, valid: self.payload.valid },
            _ => GazeSample::dropout(self.ts_ms),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplayedSession {
    pub participant: String,
    pub session: u8,
    pub start: Option<SessionStartPayload>,
    pub start_ts: Option<u64>,
    pub phases: Vec<(u64, SessionPhase)>,
    pub gaze: Vec<GazeEntry>,
    pub intents: Vec<ActuatorIntent>,
    pub keys: Vec<KeyPress>,
    pub onsets: Vec<(u64, TrialOnsetPayload)>,
    pub outcomes: Vec<TrialOutcome>,
    pub questionnaire: Option<QuestionnaireResponse>,
}

fn decode<T: for<'de> serde::Deserialize<'de>>(rec: &EventRecord, n: usize) -> Result<T, LogError> {
    rec.payload_as()
        .map_err(|e| LogError::Corrupt { line: n, reason: format!("{} payload: {e}", rec.kind) })
}

/// Splits a session's records into its streams. Records are assumed to come
/// from a single (participant, session) file.
pub fn replay(records: &[EventRecord]) -> Result<ReplayedSession, LogError> {
    let mut out = ReplayedSession::default();
    for (i, rec) in records.iter().enumerate() {
        let n = i + 1;
        if i == 0 {
            out.participant = rec.participant.clone();
            out.session = rec.session;
        } else if rec.participant != out.participant || rec.session != out.session {
            return Err(LogError::Corrupt {
                line: n,
                reason: format!("record for {}/{} in a log of {}/{}", rec.participant, rec.session, out.participant, out.session),
            });
        }
        match rec.kind.as_str() {
            kind::SESSION_START => {
                out.start = Some(decode(rec, n)?);
                out.start_ts = Some(rec.ts_ms);
                out.phases.push((rec.ts_ms, SessionPhase::Calibration));
            }
            kind::PHASE => out.phases.push((rec.ts_ms, decode(rec, n)?)),
            kind::GAZE => out.gaze.push(GazeEntry { ts_ms: rec.ts_ms, payload: decode(rec, n)? }),
            kind::INTENT => {
                let p: IntentPayload = decode(rec, n)?;
                out.intents.push(ActuatorIntent { site: p.site, active: p.active, ts_ms: rec.ts_ms });
            }
            kind::KEY => {
                let p: KeyPayload = decode(rec, n)?;
                out.keys.push(KeyPress { key: p.key, ts_ms: rec.ts_ms });
            }
            kind::TRIAL_ONSET => out.onsets.push((rec.ts_ms, decode(rec, n)?)),
            kind::TRIAL_RESULT => {
                let p: TrialResultPayload = decode(rec, n)?;
                if p.index as usize != out.outcomes.len() {
                    return Err(LogError::Corrupt { line: n, reason: format!("trial {} out of sequence", p.index) });
                }
                out.outcomes.push(p.outcome);
            }
            kind::QUESTIONNAIRE => out.questionnaire = Some(decode(rec, n)?),
            kind::CALIBRATION_POINT | kind::CALIBRATION_DONE | kind::REJECTED => {}
            other => {
                return Err(LogError::Corrupt { line: n, reason: format!("unknown record kind {other:?}") })
            }
        }
    }
    Ok(out)
}

pub fn replay_file(path: impl AsRef<Path>) -> Result<ReplayedSession, LogError> {
    replay(&read_log(path)?)
}

impl ReplayedSession {
    fn start(&self) -> Result<&SessionStartPayload, LogError> {
        self.start.as_ref().ok_or_else(|| LogError::Incomplete("no session_start record".into()))
    }

    /// Interval from the first trial's start to the last trial's scoring.
    pub fn task_window(&self) -> Option<(u64, u64)> {
        let begin = self
            .phases
            .iter()
            .find(|(_, p)| *p == SessionPhase::Running { trial: 0 })
            .map(|(t, _)| *t)?;
        let end = self.phases.iter().find(|(_, p)| *p == SessionPhase::Questionnaire).map(|(t, _)| *t)?;
        Some((begin, end))
    }

    /// Gaze samples the live service fed to the controller.
    pub fn routed_gaze(&self) -> impl Iterator<Item = GazeSample> + '_ {
        self.gaze.iter().filter(|g| g.payload.routed).map(GazeEntry::sample)
    }

    /// Feeds the routed gaze through a fresh controller, switching off when
    /// the task ends, exactly as the live service does.
    pub fn recompute_intents(&self) -> Result<Vec<ActuatorIntent>, LogError> {
        let start = self.start()?;
        let mut ctl = Controller::new(start.config.feedback, start.filter);
        let mut intents = Vec::new();
        for s in self.routed_gaze() {
            let step = ctl.step(&s).map_err(|e| LogError::Mismatch(e.to_string()))?;
            intents.extend(step);
        }
        if let Some((_, end)) = self.task_window() {
            intents.extend(ctl.release(end));
        }
        Ok(intents)
    }

    /// Rescores every shown trial from the logged onsets and key presses.
    pub fn recompute_outcomes(&self) -> Result<Vec<TrialOutcome>, LogError> {
        let start = self.start()?;
        self.onsets
            .iter()
            .map(|(onset, p)| {
                let spec = start
                    .plan
                    .get(p.index as usize)
                    .ok_or_else(|| LogError::Mismatch(format!("onset for unknown trial {}", p.index)))?;
                if spec.shape != p.shape {
                    return Err(LogError::Mismatch(format!("trial {} shape differs from plan", p.index)));
                }
                Ok(score_presses(spec, &self.keys, *onset, p.window_ms))
            })
            .collect()
    }

    pub fn verify(&self) -> Result<(), LogError> {
        let intents = self.recompute_intents()?;
        if intents != self.intents {
            let at = intents.iter().zip(&self.intents).position(|(a, b)| a != b).unwrap_or(intents.len().min(self.intents.len()));
            return Err(LogError::Mismatch(format!(
                "intent stream diverges at #{at} ({} recomputed vs {} logged)",
                intents.len(),
                self.intents.len()
            )));
        }
        let outcomes = self.recompute_outcomes()?;
        if outcomes.len() < self.outcomes.len() || outcomes[..self.outcomes.len()] != self.outcomes[..] {
            return Err(LogError::Mismatch("trial outcomes differ from rescoring".into()));
        }
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.start.is_some() && self.outcomes.len() == crate::task::TRIALS_PER_SESSION && self.task_window().is_some()
    }

    /// Analysis view of the session, built from the recomputed outcomes.
    pub fn to_session_data(&self) -> Result<SessionData, LogError> {
        let start = self.start()?;
        let (start_ts, end_ts) = self
            .task_window()
            .ok_or_else(|| LogError::Incomplete(format!("{}/{}: task never finished", self.participant, self.session)))?;
        let outcomes = self.recompute_outcomes()?;
        Ok(SessionData {
            participant: self.participant.clone(),
            session: self.session,
            config: start.config,
            start_ts,
            end_ts,
            shapes: start.plan.iter().map(|t| t.shape).collect(),
            outcomes,
            gaze: self.gaze.iter().map(GazeEntry::sample).collect(),
            questionnaire: self.questionnaire,
        })
    }
}
