//! Within-subject study orchestration.
//!
//! A participant runs all twelve feedback × duration × distraction cells in
//! a seeded random order. Each session walks the phases
//! `Calibration → Ready → Running(0..=9) → Questionnaire → Rest` and the
//! study moves to the next session (or `Done`) once the rest guard allows.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::FeedbackMode;
use crate::task::DurationClass;

mod machine;
pub mod wire;

pub use machine::{SessionRunner, SessionSettings, Step, Study};
pub use wire::{Envelope, Inbound, Outbound, WireError};

pub const SESSIONS_PER_STUDY: usize = 12;
pub const MIN_REST_MS: u64 = 60_000;
pub const MIN_CALIBRATION_POINTS: u32 = 9;
pub const FEEDBACK_THROTTLE_MS: u64 = 100;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("questionnaire item q{item} = {value} is outside 1..=7")]
    Likert { item: usize, value: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SessionConfig {
    pub feedback: FeedbackMode,
    pub duration: DurationClass,
    pub distraction: bool,
}

impl SessionConfig {
    /// All twelve cells, ordered feedback → duration → distraction.
    pub fn all() -> Vec<SessionConfig> {
        let mut v = Vec::with_capacity(SESSIONS_PER_STUDY);
        for feedback in FeedbackMode::ALL {
            for duration in DurationClass::ALL {
                for distraction in [false, true] {
                    v.push(SessionConfig { feedback, duration, distraction });
                }
            }
        }
        v
    }

    /// Position in [`SessionConfig::all`].
    pub fn ordinal(&self) -> usize {
        let f = FeedbackMode::ALL.iter().position(|m| *m == self.feedback).expect("mode");
        let d = DurationClass::ALL.iter().position(|m| *m == self.duration).expect("duration");
        f * 4 + d * 2 + usize::from(self.distraction)
    }

    /// Short label such as `filter/long/distraction`.
    pub fn label(&self) -> String {
        format!(
            "{}/{}/{}",
            self.feedback.as_str(),
            self.duration.as_str(),
            if self.distraction { "distraction" } else { "quiet" }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyPlan {
    pub participant_id: String,
    pub sessions: Vec<SessionConfig>,
    pub seed: u64,
}

impl StudyPlan {
    /// Seed for the trial plan of session `index`.
    pub fn trial_seed(&self, index: usize) -> u64 {
        derive_seed(self.seed, index as u64)
    }
}

pub fn generate_study_plan(participant_id: &str, seed: u64) -> StudyPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sessions = SessionConfig::all();
    sessions.shuffle(&mut rng);
    StudyPlan { participant_id: participant_id.to_owned(), sessions, seed }
}

/// SplitMix64 finalizer over `seed ^ f(stream)`; gives well separated child
/// seeds for independent streams.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum SessionPhase {
    Calibration,
    Ready,
    Running { trial: u8 },
    Questionnaire,
    Rest { started_ms: u64 },
    Done,
}

impl SessionPhase {
    pub fn name(&self) -> &'static str {
        match self {
            SessionPhase::Calibration => "calibration",
            SessionPhase::Ready => "ready",
            SessionPhase::Running { .. } => "running",
            SessionPhase::Questionnaire => "questionnaire",
            SessionPhase::Rest { .. } => "rest",
            SessionPhase::Done => "done",
        }
    }

    /// Phases in which gaze drives the tactile loop.
    pub fn routes_gaze(&self) -> bool {
        matches!(self, SessionPhase::Ready | SessionPhase::Running { .. })
    }
}

/// Six 1–7 Likert ratings collected after each session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionnaireResponse {
    pub q1: u8,
    pub q2: u8,
    pub q3: u8,
    pub q4: u8,
    pub q5: u8,
    pub q6: u8,
}

impl QuestionnaireResponse {
    pub const ITEMS: [&'static str; 6] = [
        "can focus on the task",
        "can focus on the screen center",
        "feel distracted due to the feedback",
        "think the feedback could improve your attention",
        "feel your performance is affected by the feedback",
        "hope the feedback could be used in your daily life",
    ];

    pub fn from_ratings(r: [i64; 6]) -> Result<Self, SessionError> {
        for (i, &v) in r.iter().enumerate() {
            if !(1..=7).contains(&v) {
                return Err(SessionError::Likert { item: i + 1, value: v });
            }
        }
        let [q1, q2, q3, q4, q5, q6] = r.map(|v| v as u8);
        Ok(Self { q1, q2, q3, q4, q5, q6 })
    }

    pub fn ratings(&self) -> [u8; 6] {
        [self.q1, self.q2, self.q3, self.q4, self.q5, self.q6]
    }
}
