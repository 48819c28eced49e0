//! Modified three-choice vigilance task: trial plans and scoring.
//!
//! A session has ten trials with a 4:3:3 target / non-target / distractor
//! mix in shuffled order. Every stimulus is preceded by a random wait drawn
//! from the session's duration class. Targets are answered with the left
//! arrow, non-targets with the right arrow, distractors not at all.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TRIALS_PER_SESSION: usize = 10;
pub const DEFAULT_DISPLAY_MS: u64 = 200;
pub const DEFAULT_WINDOW_MS: u64 = 2000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskError {
    #[error("expected {expected} trial outcomes, got {got}")]
    OutcomeCount { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StimulusShape {
    /// Upward triangle.
    Target,
    /// Downward triangle.
    NonTarget,
    /// Diamond.
    Distractor,
}

impl StimulusShape {
    pub fn as_str(self) -> &'static str {
        match self {
            StimulusShape::Target => "target",
            StimulusShape::NonTarget => "non_target",
            StimulusShape::Distractor => "distractor",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [StimulusShape::Target, StimulusShape::NonTarget, StimulusShape::Distractor]
            .into_iter()
            .find(|v| v.as_str() == s)
    }

    /// Key expected for this shape, `None` for the distractor.
    pub fn expected_key(self) -> Option<Key> {
        match self {
            StimulusShape::Target => Some(Key::Left),
            StimulusShape::NonTarget => Some(Key::Right),
            StimulusShape::Distractor => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationClass {
    Short,
    Long,
}

impl DurationClass {
    pub const ALL: [DurationClass; 2] = [DurationClass::Short, DurationClass::Long];

    /// Inclusive pre-stimulus interval bounds in milliseconds.
    pub fn interval_bounds_ms(self) -> (u64, u64) {
        match self {
            DurationClass::Short => (2_000, 5_000),
            DurationClass::Long => (25_000, 35_000),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DurationClass::Short => "short",
            DurationClass::Long => "long",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        DurationClass::ALL.into_iter().find(|d| d.as_str() == s)
    }
}

/// Response keys; serialized as `"Left"` / `"Right"` on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Key {
    Left,
    Right,
}

impl Key {
    pub fn as_str(self) -> &'static str {
        match self {
            Key::Left => "Left",
            Key::Right => "Right",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "Left" | "left" => Some(Key::Left),
            "Right" | "right" => Some(Key::Right),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyPress {
    pub key: Key,
    pub ts_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub index: u8,
    pub shape: StimulusShape,
    pub pre_interval_ms: u64,
    pub display_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub responded: bool,
    pub key: Option<Key>,
    pub rt_ms: Option<u64>,
    pub correct: bool,
    pub missed: bool,
}

const SHAPE_MIX: [(StimulusShape, usize); 3] = [
    (StimulusShape::Target, 4),
    (StimulusShape::NonTarget, 3),
    (StimulusShape::Distractor, 3),
];

pub fn generate_trial_plan(duration: DurationClass, seed: u64) -> Vec<TrialSpec> {
    generate_trial_plan_with_display(duration, seed, DEFAULT_DISPLAY_MS)
}

pub fn generate_trial_plan_with_display(
    duration: DurationClass,
    seed: u64,
    display_ms: u64,
) -> Vec<TrialSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shapes: Vec<StimulusShape> = SHAPE_MIX
        .iter()
        .flat_map(|&(shape, n)| std::iter::repeat(shape).take(n))
        .collect();
    shapes.shuffle(&mut rng);
    let (lo, hi) = duration.interval_bounds_ms();
    shapes
        .into_iter()
        .enumerate()
        .map(|(i, shape)| TrialSpec {
            index: i as u8,
            shape,
            pre_interval_ms: rng.gen_range(lo..=hi),
            display_ms,
        })
        .collect()
}

/// Scores one trial from the first key press, if any. A press outside
/// `(onset_ms, onset_ms + window_ms]` is ignored as if absent.
pub fn score_response(
    spec: &TrialSpec,
    key_event: Option<KeyPress>,
    onset_ms: u64,
    window_ms: u64,
) -> TrialOutcome {
    let press = key_event.filter(|p| p.ts_ms > onset_ms && p.ts_ms <= onset_ms + window_ms);
    match press {
        Some(p) => TrialOutcome {
            responded: true,
            key: Some(p.key),
            rt_ms: Some(p.ts_ms - onset_ms),
            correct: spec.shape.expected_key() == Some(p.key),
            missed: false,
        },
        None => {
            let expects_press = spec.shape.expected_key().is_some();
            TrialOutcome {
                responded: false,
                key: None,
                rt_ms: None,
                correct: !expects_press,
                missed: expects_press,
            }
        }
    }
}

/// Scores from a press log: the first press inside the window counts, the
/// rest are ignored.
pub fn score_presses(
    spec: &TrialSpec,
    presses: &[KeyPress],
    onset_ms: u64,
    window_ms: u64,
) -> TrialOutcome {
    let first = presses
        .iter()
        .copied()
        .filter(|p| p.ts_ms > onset_ms && p.ts_ms <= onset_ms + window_ms)
        .min_by_key(|p| p.ts_ms);
    score_response(spec, first, onset_ms, window_ms)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub mean_rt_ms: Option<f64>,
    pub missed_count: u32,
    pub accuracy: f64,
}

pub fn session_metrics(outcomes: &[TrialOutcome]) -> Result<SessionMetrics, TaskError> {
    if outcomes.len() != TRIALS_PER_SESSION {
        return Err(TaskError::OutcomeCount { expected: TRIALS_PER_SESSION, got: outcomes.len() });
    }
    let rts: Vec<f64> = outcomes
        .iter()
        .filter(|o| o.correct && o.responded)
        .filter_map(|o| o.rt_ms)
        .map(|rt| rt as f64)
        .collect();
    let mean_rt_ms = (!rts.is_empty()).then(|| rts.iter().sum::<f64>() / rts.len() as f64);
    let missed_count = outcomes.iter().filter(|o| o.missed).count() as u32;
    let correct = outcomes.iter().filter(|o| o.correct).count();
    Ok(SessionMetrics {
        mean_rt_ms,
        missed_count,
        accuracy: correct as f64 / TRIALS_PER_SESSION as f64,
    })
}
