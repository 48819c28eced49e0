//! Gaze-contingent feedback state machine.
//!
//! The controller turns a stream of [`GazeSample`]s into edge-triggered
//! [`ActuatorIntent`]s. Three modes exist: `Silence` never actuates,
//! `Stationary` always vibrates the site under the current gaze quadrant and
//! `Filter` does the same only while the gaze is far enough from the center,
//! with a hysteresis pair so that a gaze hovering on the threshold does not
//! chatter.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaze::{
    classify_quadrant, distance_from_center, quadrant_to_body_site, BodySite, GazeSample,
    MAX_CENTER_DISTANCE,
};

/// Half period of the 1 Hz vibration pulse train.
pub const PULSE_ON_MS: u64 = 500;
pub const PULSE_PERIOD_MS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("sample at {got} ms is older than the last update at {last} ms")]
    Timing { last: u64, got: u64 },
    #[error("invalid filter thresholds r_on={r_on}, r_off={r_off}")]
    Thresholds { r_on: f64, r_off: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    Silence,
    Stationary,
    Filter,
}

impl FeedbackMode {
    pub const ALL: [FeedbackMode; 3] =
        [FeedbackMode::Silence, FeedbackMode::Stationary, FeedbackMode::Filter];

    pub fn as_str(self) -> &'static str {
        match self {
            FeedbackMode::Silence => "silence",
            FeedbackMode::Stationary => "stationary",
            FeedbackMode::Filter => "filter",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        FeedbackMode::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

/// Engage/disengage radii for the filter mode, in normalized screen units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub r_on: f64,
    pub r_off: f64,
}

impl FilterParams {
    pub const DEFAULT: FilterParams = FilterParams { r_on: 0.20, r_off: 0.15 };

    /// Requires `0 <= r_off <= r_on < sqrt(0.5)`. A zero pair is accepted and
    /// turns the filter into a stationary controller.
    pub fn new(r_on: f64, r_off: f64) -> Result<Self, ControllerError> {
        if (0.0..=r_on).contains(&r_off) && r_on < MAX_CENTER_DISTANCE {
            Ok(Self { r_on, r_off })
        } else {
            Err(ControllerError::Thresholds { r_on, r_off })
        }
    }
}

impl Default for FilterParams {
    fn default() -> Self {
        Self::DEFAULT
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub mode: FeedbackMode,
    pub active_site: Option<BodySite>,
    pub filter_engaged: bool,
    pub last_update_ms: u64,
}

impl ControllerState {
    pub fn new(mode: FeedbackMode) -> Self {
        Self { mode, active_site: None, filter_engaged: false, last_update_ms: 0 }
    }
}

/// Request to switch one body site on or off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActuatorIntent {
    pub site: BodySite,
    pub active: bool,
    pub ts_ms: u64,
}

/// Moves the active site to `target`, emitting off-then-on edges.
fn retarget(
    state: &mut ControllerState,
    target: Option<BodySite>,
    ts_ms: u64,
    out: &mut Vec<ActuatorIntent>,
) {
    if state.active_site == target {
        return;
    }
    if let Some(old) = state.active_site {
        out.push(ActuatorIntent { site: old, active: false, ts_ms });
    }
    if let Some(new) = target {
        out.push(ActuatorIntent { site: new, active: true, ts_ms });
    }
    state.active_site = target;
}

/// Advances the controller by one gaze sample.
///
/// On error the caller keeps its previous state; the sample is dropped.
pub fn controller_step(
    state: &ControllerState,
    s: &GazeSample,
    params: &FilterParams,
) -> Result<(ControllerState, Vec<ActuatorIntent>), ControllerError> {
    if s.ts_ms < state.last_update_ms {
        return Err(ControllerError::Timing { last: state.last_update_ms, got: s.ts_ms });
    }
    let mut next = *state;
    let mut intents = Vec::new();
    if !s.is_usable() {
        // dropout leaves everything, including the clock, where it was
        return Ok((next, intents));
    }
    next.last_update_ms = s.ts_ms;
    let site = quadrant_to_body_site(classify_quadrant(s).expect("usable sample"));
    match state.mode {
        FeedbackMode::Silence => {}
        FeedbackMode::Stationary => retarget(&mut next, Some(site), s.ts_ms, &mut intents),
        FeedbackMode::Filter => {
            let d = distance_from_center(s).expect("usable sample");
            next.filter_engaged =
                if state.filter_engaged { d >= params.r_off } else { d > params.r_on };
            let target = next.filter_engaged.then_some(site);
            retarget(&mut next, target, s.ts_ms, &mut intents);
        }
    }
    Ok((next, intents))
}

/// Motor drive level at `now_ms` for a site activated at `epoch_ms`:
/// 1 Hz square wave, on for the first half of every period.
pub fn pulse_schedule(active_site: Option<BodySite>, now_ms: u64, epoch_ms: u64) -> bool {
    match active_site {
        Some(_) => now_ms.saturating_sub(epoch_ms) % PULSE_PERIOD_MS < PULSE_ON_MS,
        None => false,
    }
}

/// Owning wrapper around [`controller_step`] for the single stepping thread.
#[derive(Debug, Clone)]
pub struct Controller {
    state: ControllerState,
    params: FilterParams,
}

impl Controller {
    pub fn new(mode: FeedbackMode, params: FilterParams) -> Self {
        Self { state: ControllerState::new(mode), params }
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn params(&self) -> &FilterParams {
        &self.params
    }

    pub fn step(&mut self, s: &GazeSample) -> Result<Vec<ActuatorIntent>, ControllerError> {
        let (next, intents) = controller_step(&self.state, s, &self.params)?;
        self.state = next;
        Ok(intents)
    }

    /// Switches everything off, e.g. when the task phase ends. The filter
    /// disengages so the next sample is judged afresh.
    pub fn release(&mut self, ts_ms: u64) -> Vec<ActuatorIntent> {
        let mut intents = Vec::new();
        let ts_ms = ts_ms.max(self.state.last_update_ms);
        retarget(&mut self.state, None, ts_ms, &mut intents);
        self.state.filter_engaged = false;
        self.state.last_update_ms = ts_ms;
        intents
    }
}
