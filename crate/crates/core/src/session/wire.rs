//! Newline-delimited JSON messages between the session service and its
//! clients. Every line is an object `{"type": ..., "ts_ms": ..., "payload": ...}`.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{SessionConfig, SessionPhase};
use crate::gaze::BodySite;
use crate::task::{Key, StimulusShape, TrialOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub ts_ms: u64,
    #[serde(default)]
    pub payload: Value,
}

impl Envelope {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("envelope serializes");
        s.push('\n');
        s
    }
}

/// A message the service could not accept; becomes an `error` reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WireError {
    pub code: &'static str,
    pub detail: String,
}

impl WireError {
    pub fn new(code: &'static str, detail: impl Into<String>) -> Self {
        Self { code, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Inbound {
    Hello,
    CalibrationPoint { x: f64, y: f64 },
    CalibrationDone { count: u32 },
    GazeSample { x: Option<f64>, y: Option<f64>, valid: bool },
    KeyEvent { key: Key },
    Questionnaire([i64; 6]),
    RestExitRequest,
}

#[derive(Deserialize)]
struct XY {
    x: f64,
    y: f64,
}

#[derive(Deserialize)]
struct GazeIn {
    #[serde(default)]
    x: Option<f64>,
    #[serde(default)]
    y: Option<f64>,
    #[serde(default = "yes")]
    valid: bool,
}

fn yes() -> bool {
    true
}

#[derive(Deserialize)]
struct CountIn {
    count: u32,
}

#[derive(Deserialize)]
struct KeyIn {
    key: String,
}

#[derive(Deserialize)]
struct LikertIn {
    q1: i64,
    q2: i64,
    q3: i64,
    q4: i64,
    q5: i64,
    q6: i64,
}

fn payload<T: for<'de> Deserialize<'de>>(kind: &str, v: &Value) -> Result<T, WireError> {
    T::deserialize(v).map_err(|e| WireError::new("bad_payload", format!("{kind}: {e}")))
}

impl Inbound {
    pub fn type_name(&self) -> &'static str {
        match self {
            Inbound::Hello => "hello",
            Inbound::CalibrationPoint { .. } => "calibration_point",
            Inbound::CalibrationDone { .. } => "calibration_done",
            Inbound::GazeSample { .. } => "gaze_sample",
            Inbound::KeyEvent { .. } => "key_event",
            Inbound::Questionnaire(_) => "questionnaire",
            Inbound::RestExitRequest => "rest_exit_request",
        }
    }

    pub fn from_envelope(env: &Envelope) -> Result<Inbound, WireError> {
        let p = &env.payload;
        let k = env.kind.as_str();
        Ok(match k {
            "hello" => Inbound::Hello,
            "calibration_point" => {
                let XY { x, y } = payload(k, p)?;
                Inbound::CalibrationPoint { x, y }
            }
            "calibration_done" => Inbound::CalibrationDone { count: payload::<CountIn>(k, p)?.count },
            "gaze_sample" => {
                let g: GazeIn = payload(k, p)?;
                Inbound::GazeSample { x: g.x, y: g.y, valid: g.valid }
            }
            "key_event" => {
                let raw: KeyIn = payload(k, p)?;
                let key = Key::parse(&raw.key)
                    .ok_or_else(|| WireError::new("bad_payload", format!("unknown key {:?}", raw.key)))?;
                Inbound::KeyEvent { key }
            }
            "questionnaire" => {
                let q: LikertIn = payload(k, p)?;
                Inbound::Questionnaire([q.q1, q.q2, q.q3, q.q4, q.q5, q.q6])
            }
            "rest_exit_request" => Inbound::RestExitRequest,
            other => return Err(WireError::new("unknown_type", format!("unknown message type {other:?}"))),
        })
    }

    /// Parses one line of the inbound stream.
    pub fn parse_line(line: &str) -> Result<(Inbound, u64), WireError> {
        let env: Envelope =
            serde_json::from_str(line).map_err(|e| WireError::new("bad_json", e.to_string()))?;
        Ok((Inbound::from_envelope(&env)?, env.ts_ms))
    }

    pub fn to_envelope(&self, ts_ms: u64) -> Envelope {
        let payload = match self {
            Inbound::Hello | Inbound::RestExitRequest => json!({}),
            Inbound::CalibrationPoint { x, y } => json!({"x": x, "y": y}),
            Inbound::CalibrationDone { count } => json!({"count": count}),
            Inbound::GazeSample { x, y, valid } => json!({"x": x, "y": y, "valid": valid}),
            Inbound::KeyEvent { key } => json!({"key": key.as_str()}),
            Inbound::Questionnaire(q) => {
                json!({"q1": q[0], "q2": q[1], "q3": q[2], "q4": q[3], "q5": q[4], "q6": q[5]})
            }
        };
        Envelope { kind: self.type_name().to_owned(), ts_ms, payload }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outbound {
    SessionStart { session: u8, config: SessionConfig },
    TrialOnset { index: u8, shape: StimulusShape, display_ms: u64 },
    TrialResult { index: u8, outcome: TrialOutcome },
    FeedbackState { active_site: Option<BodySite> },
    Phase(SessionPhase),
    Error { code: String, detail: String },
}

impl Outbound {
    pub fn type_name(&self) -> &'static str {
        match self {
            Outbound::SessionStart { .. } => "session_start",
            Outbound::TrialOnset { .. } => "trial_onset",
            Outbound::TrialResult { .. } => "trial_result",
            Outbound::FeedbackState { .. } => "feedback_state",
            Outbound::Phase(_) => "phase",
            Outbound::Error { .. } => "error",
        }
    }

    pub fn error(e: &WireError) -> Self {
        Outbound::Error { code: e.code.to_owned(), detail: e.detail.clone() }
    }

    pub fn to_envelope(&self, ts_ms: u64) -> Envelope {
        let payload = match self {
            Outbound::SessionStart { session, config } => json!({
                "session": session,
                "feedback": config.feedback,
                "duration": config.duration,
                "distraction": config.distraction,
            }),
            Outbound::TrialOnset { index, shape, display_ms } => {
                json!({"index": index, "shape": shape, "display_ms": display_ms})
            }
            Outbound::TrialResult { index, outcome } => json!({"index": index, "outcome": outcome}),
            Outbound::FeedbackState { active_site } => json!({"active_site": active_site}),
            Outbound::Phase(p) => serde_json::to_value(p).expect("phase serializes"),
            Outbound::Error { code, detail } => json!({"code": code, "detail": detail}),
        };
        Envelope { kind: self.type_name().to_owned(), ts_ms, payload }
    }
}
