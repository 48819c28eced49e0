use crate::controller::{ActuatorIntent, Controller, FilterParams};
use crate::event_log::{
    kind, CountPayload, EventRecord, GazePayload, IntentPayload, KeyPayload, PointPayload,
    RejectedPayload, SessionStartPayload, TrialOnsetPayload, TrialResultPayload,
};
use crate::gaze::GazeSample;
use crate::task::{
    generate_trial_plan_with_display, score_presses, KeyPress, TrialOutcome, TrialSpec,
    DEFAULT_DISPLAY_MS, DEFAULT_WINDOW_MS, TRIALS_PER_SESSION,
};

use super::wire::{Inbound, Outbound, WireError};
use super::{
    QuestionnaireResponse, SessionConfig, SessionPhase, StudyPlan, FEEDBACK_THROTTLE_MS,
    MIN_CALIBRATION_POINTS, MIN_REST_MS,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionSettings {
    pub filter: FilterParams,
    pub window_ms: u64,
    pub display_ms: u64,
    pub min_calibration_points: u32,
    pub min_rest_ms: u64,
    pub feedback_throttle_ms: u64,
}

impl Default for SessionSettings {
    fn default() -> Self {
        Self {
            filter: FilterParams::DEFAULT,
            window_ms: DEFAULT_WINDOW_MS,
            display_ms: DEFAULT_DISPLAY_MS,
            min_calibration_points: MIN_CALIBRATION_POINTS,
            min_rest_ms: MIN_REST_MS,
            feedback_throttle_ms: FEEDBACK_THROTTLE_MS,
        }
    }
}

/// Output of one call into the state machine: replies to clients, records
/// for the event log and intents for the actuator, each in emission order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Step {
    pub outbound: Vec<(u64, Outbound)>,
    pub records: Vec<EventRecord>,
    pub intents: Vec<ActuatorIntent>,
}

impl Step {
    pub fn extend(&mut self, other: Step) {
        self.outbound.extend(other.outbound);
        self.records.extend(other.records);
        self.intents.extend(other.intents);
    }

    pub fn errors(&self) -> impl Iterator<Item = &str> {
        self.outbound.iter().filter_map(|(_, o)| match o {
            Outbound::Error { code, .. } => Some(code.as_str()),
            _ => None,
        })
    }
}

/// One session of one participant.
#[derive(Debug, Clone)]
pub struct SessionRunner {
    participant: String,
    index: u8,
    config: SessionConfig,
    settings: SessionSettings,
    plan: Vec<TrialSpec>,
    phase: SessionPhase,
    controller: Controller,
    calibration_points: u32,
    trial_start_ms: u64,
    onset_ms: Option<u64>,
    presses: Vec<KeyPress>,
    outcomes: Vec<TrialOutcome>,
    questionnaire: Option<QuestionnaireResponse>,
    task_start_ms: Option<u64>,
    task_end_ms: Option<u64>,
    last_broadcast_ms: Option<u64>,
    broadcast_pending: bool,
    clock_ms: u64,
}

impl SessionRunner {
    /// Opens the session in `Calibration` and announces it.
    pub fn start(
        participant: &str,
        index: u8,
        config: SessionConfig,
        trial_seed: u64,
        settings: SessionSettings,
        now_ms: u64,
    ) -> (Self, Step) {
        let plan = generate_trial_plan_with_display(config.duration, trial_seed, settings.display_ms);
        let runner = Self {
            participant: participant.to_owned(),
            index,
            config,
            settings,
            plan: plan.clone(),
            phase: SessionPhase::Calibration,
            controller: Controller::new(config.feedback, settings.filter),
            calibration_points: 0,
            trial_start_ms: 0,
            onset_ms: None,
            presses: Vec::new(),
            outcomes: Vec::with_capacity(TRIALS_PER_SESSION),
            questionnaire: None,
            task_start_ms: None,
            task_end_ms: None,
            last_broadcast_ms: None,
            broadcast_pending: false,
            clock_ms: now_ms,
        };
        let mut step = Step::default();
        let payload = SessionStartPayload {
            config,
            trial_seed,
            filter: settings.filter,
            window_ms: settings.window_ms,
            plan,
        };
        step.records.push(runner.record(now_ms, kind::SESSION_START, &payload));
        step.outbound.push((now_ms, Outbound::SessionStart { session: index, config }));
        step.outbound.push((now_ms, Outbound::Phase(SessionPhase::Calibration)));
        (runner, step)
    }

    pub fn phase(&self) -> SessionPhase {
        self.phase
    }

    pub fn config(&self) -> SessionConfig {
        self.config
    }

    pub fn index(&self) -> u8 {
        self.index
    }

    pub fn plan(&self) -> &[TrialSpec] {
        &self.plan
    }

    pub fn outcomes(&self) -> &[TrialOutcome] {
        &self.outcomes
    }

    pub fn questionnaire(&self) -> Option<QuestionnaireResponse> {
        self.questionnaire
    }

    pub fn task_window(&self) -> Option<(u64, u64)> {
        self.task_start_ms.zip(self.task_end_ms)
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn is_finished(&self) -> bool {
        self.phase == SessionPhase::Done
    }

    /// Onset time of the current trial, once shown.
    pub fn current_onset(&self) -> Option<u64> {
        self.onset_ms
    }

    fn record<P: serde::Serialize>(&self, ts: u64, kind: &str, payload: &P) -> EventRecord {
        EventRecord::new(ts, &self.participant, self.index, kind, payload)
    }

    /// Earliest time at which [`SessionRunner::tick`] has work to do.
    pub fn next_deadline(&self) -> Option<u64> {
        let timed = match self.phase {
            SessionPhase::Running { trial } => Some(match self.onset_ms {
                None => self.trial_start_ms + self.plan[trial as usize].pre_interval_ms,
                Some(onset) => onset + self.window_for(trial),
            }),
            _ => None,
        };
        let flush = self
            .broadcast_pending
            .then(|| self.last_broadcast_ms.map_or(self.clock_ms, |t| t + self.settings.feedback_throttle_ms));
        match (timed, flush) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Response window of `trial`: the configured window, cut short by the
    /// next onset. Inter-onset spacing equals the next pre-interval.
    fn window_for(&self, trial: u8) -> u64 {
        let next = self.plan.get(trial as usize + 1).map(|t| t.pre_interval_ms);
        next.map_or(self.settings.window_ms, |gap| gap.min(self.settings.window_ms))
    }

    fn transition(&mut self, ts: u64, to: SessionPhase, step: &mut Step) {
        self.phase = to;
        step.records.push(self.record(ts, kind::PHASE, &to));
        step.outbound.push((ts, Outbound::Phase(to)));
    }

    fn push_intents(&mut self, ts: u64, intents: Vec<ActuatorIntent>, step: &mut Step) {
        if intents.is_empty() {
            return;
        }
        for i in &intents {
            step.records.push(self.record(i.ts_ms, kind::INTENT, &IntentPayload { site: i.site, active: i.active }));
        }
        step.intents.extend(intents);
        self.broadcast_pending = true;
        self.flush_broadcast(ts, step);
    }

    fn flush_broadcast(&mut self, now: u64, step: &mut Step) {
        if !self.broadcast_pending {
            return;
        }
        let due = self.last_broadcast_ms.map_or(true, |t| now >= t + self.settings.feedback_throttle_ms);
        if due {
            self.broadcast_pending = false;
            self.last_broadcast_ms = Some(now);
            let active_site = self.controller.state().active_site;
            step.outbound.push((now, Outbound::FeedbackState { active_site }));
        }
    }

    /// Processes every timed event due at or before `now_ms`, in time order.
    pub fn tick(&mut self, now_ms: u64) -> Step {
        let mut step = Step::default();
        self.advance_to(now_ms, true, &mut step);
        step
    }

    /// With `inclusive == false` events scheduled exactly at `now` stay
    /// pending, so a message stamped `now` is applied before them.
    fn advance_to(&mut self, now: u64, inclusive: bool, step: &mut Step) {
        let now = now.max(self.clock_ms);
        let due = |t: u64| t < now || (inclusive && t == now);
        while let SessionPhase::Running { trial } = self.phase {
            let spec = self.plan[trial as usize];
            match self.onset_ms {
                None => {
                    let onset = self.trial_start_ms + spec.pre_interval_ms;
                    if !due(onset) {
                        break;
                    }
                    self.onset_ms = Some(onset);
                    self.presses.clear();
                    let window_ms = self.window_for(trial);
                    let p = TrialOnsetPayload { index: trial, shape: spec.shape, window_ms };
                    step.records.push(self.record(onset, kind::TRIAL_ONSET, &p));
                    step.outbound.push((
                        onset,
                        Outbound::TrialOnset { index: trial, shape: spec.shape, display_ms: spec.display_ms },
                    ));
                }
                Some(onset) => {
                    let window = self.window_for(trial);
                    let close = onset + window;
                    if !due(close) {
                        break;
                    }
                    let outcome = score_presses(&spec, &self.presses, onset, window);
                    self.outcomes.push(outcome);
                    let p = TrialResultPayload { index: trial, outcome };
                    step.records.push(self.record(close, kind::TRIAL_RESULT, &p));
                    step.outbound.push((close, Outbound::TrialResult { index: trial, outcome }));
                    self.onset_ms = None;
                    if (trial as usize) + 1 < self.plan.len() {
                        // the next pre-interval runs from this onset
                        self.trial_start_ms = onset;
                        self.transition(close, SessionPhase::Running { trial: trial + 1 }, step);
                    } else {
                        self.task_end_ms = Some(close);
                        let off = self.controller.release(close);
                        self.push_intents(close, off, step);
                        self.transition(close, SessionPhase::Questionnaire, step);
                    }
                }
            }
        }
        self.clock_ms = now;
        self.flush_broadcast(now, step);
    }

    fn reject(&self, now: u64, err: WireError, step: &mut Step) {
        let p = RejectedPayload { code: err.code.to_owned(), detail: err.detail.clone() };
        step.records.push(self.record(now, kind::REJECTED, &p));
        step.outbound.push((now, Outbound::error(&err)));
    }

    fn out_of_phase(&self, msg: &Inbound) -> WireError {
        WireError::new(
            "out_of_phase",
            format!("{} not accepted during {}", msg.type_name(), self.phase.name()),
        )
    }

    /// Applies one inbound message stamped `now_ms` by the service clock;
    /// `client_ts_ms` is the sender's own timestamp, kept for the record.
    pub fn handle(&mut self, msg: &Inbound, client_ts_ms: u64, now_ms: u64) -> Step {
        let mut step = Step::default();
        self.advance_to(now_ms, false, &mut step);
        let now = self.clock_ms;
        match (msg, self.phase) {
            (Inbound::Hello, phase) => {
                step.outbound.push((now, Outbound::SessionStart { session: self.index, config: self.config }));
                step.outbound.push((now, Outbound::Phase(phase)));
            }
            (Inbound::GazeSample { x, y, valid }, phase) => self.on_gaze(*x, *y, *valid, client_ts_ms, now, phase, &mut step),
            (Inbound::CalibrationPoint { x, y }, SessionPhase::Calibration) => {
                self.calibration_points += 1;
                step.records.push(self.record(now, kind::CALIBRATION_POINT, &PointPayload { x: *x, y: *y }));
            }
            (Inbound::CalibrationDone { count }, SessionPhase::Calibration) => {
                if *count < self.settings.min_calibration_points {
                    let err = WireError::new(
                        "calibration_incomplete",
                        format!("{count} points reported, {} required", self.settings.min_calibration_points),
                    );
                    self.reject(now, err, &mut step);
                } else {
                    step.records.push(self.record(now, kind::CALIBRATION_DONE, &CountPayload { count: *count }));
                    self.transition(now, SessionPhase::Ready, &mut step);
                }
            }
            (Inbound::KeyEvent { key }, SessionPhase::Ready) => {
                step.records.push(self.record(now, kind::KEY, &KeyPayload { key: *key, client_ts_ms }));
                self.task_start_ms = Some(now);
                self.trial_start_ms = now;
                self.onset_ms = None;
                self.transition(now, SessionPhase::Running { trial: 0 }, &mut step);
            }
            (Inbound::KeyEvent { key }, SessionPhase::Running { .. }) => {
                step.records.push(self.record(now, kind::KEY, &KeyPayload { key: *key, client_ts_ms }));
                if self.onset_ms.is_some() {
                    self.presses.push(KeyPress { key: *key, ts_ms: now });
                }
            }
            (Inbound::Questionnaire(ratings), SessionPhase::Questionnaire) => {
                match QuestionnaireResponse::from_ratings(*ratings) {
                    Ok(q) => {
                        self.questionnaire = Some(q);
                        step.records.push(self.record(now, kind::QUESTIONNAIRE, &q));
                        self.transition(now, SessionPhase::Rest { started_ms: now }, &mut step);
                    }
                    Err(e) => self.reject(now, WireError::new("invalid_questionnaire", e.to_string()), &mut step),
                }
            }
            (Inbound::RestExitRequest, SessionPhase::Rest { started_ms }) => {
                let rested = now - started_ms;
                if rested < self.settings.min_rest_ms {
                    let err = WireError::new(
                        "rest_guard",
                        format!("rested {rested} ms, minimum {} ms", self.settings.min_rest_ms),
                    );
                    self.reject(now, err, &mut step);
                } else {
                    self.transition(now, SessionPhase::Done, &mut step);
                }
            }
            (msg, _) => {
                let err = self.out_of_phase(msg);
                self.reject(now, err, &mut step);
            }
        }
        self.advance_to(now, true, &mut step);
        step
    }

    #[allow(clippy::too_many_arguments)]
    fn on_gaze(
        &mut self,
        x: Option<f64>,
        y: Option<f64>,
        valid: bool,
        client_ts_ms: u64,
        now: u64,
        phase: SessionPhase,
        step: &mut Step,
    ) {
        let sample = match (x, y) {
            (Some(x), Some(y)) if valid => GazeSample::new(now, x, y),
            (Some(x), Some(y)) => GazeSample { ts_ms: now, x, y, valid: false },
            _ => GazeSample::dropout(now),
        };
        let routed = phase.routes_gaze();
        let finite = |v: Option<f64>| v.filter(|v| v.is_finite());
        let p = GazePayload { x: finite(x), y: finite(y), valid: sample.valid, client_ts_ms, routed };
        step.records.push(self.record(now, kind::GAZE, &p));
        if routed {
            match self.controller.step(&sample) {
                Ok(intents) => self.push_intents(now, intents, step),
                Err(e) => self.reject(now, WireError::new("timing", e.to_string()), step),
            }
        }
    }
}

/// The twelve-session schedule for one participant.
#[derive(Debug, Clone)]
pub struct Study {
    plan: StudyPlan,
    settings: SessionSettings,
    current: SessionRunner,
    finished: Vec<SessionRunner>,
    done: bool,
}

impl Study {
    pub fn start(plan: StudyPlan, settings: SessionSettings, now_ms: u64) -> (Self, Step) {
        let (current, step) = SessionRunner::start(
            &plan.participant_id,
            0,
            plan.sessions[0],
            plan.trial_seed(0),
            settings,
            now_ms,
        );
        (Self { plan, settings, current, finished: Vec::new(), done: false }, step)
    }

    pub fn plan(&self) -> &StudyPlan {
        &self.plan
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn current(&self) -> &SessionRunner {
        &self.current
    }

    /// Sessions already completed, in order.
    pub fn completed(&self) -> &[SessionRunner] {
        &self.finished
    }

    pub fn phase(&self) -> SessionPhase {
        if self.done {
            SessionPhase::Done
        } else {
            self.current.phase()
        }
    }

    pub fn next_deadline(&self) -> Option<u64> {
        if self.done {
            None
        } else {
            self.current.next_deadline()
        }
    }

    pub fn tick(&mut self, now_ms: u64) -> Step {
        if self.done {
            return Step::default();
        }
        self.current.tick(now_ms)
    }

    pub fn handle(&mut self, msg: &Inbound, client_ts_ms: u64, now_ms: u64) -> Step {
        if self.done {
            let mut step = Step::default();
            match msg {
                Inbound::Hello => step.outbound.push((now_ms, Outbound::Phase(SessionPhase::Done))),
                _ => {
                    let err = WireError::new("out_of_phase", "study is complete");
                    step.outbound.push((now_ms, Outbound::error(&err)));
                }
            }
            return step;
        }
        let mut step = self.current.handle(msg, client_ts_ms, now_ms);
        if self.current.is_finished() {
            let next = self.current.index() as usize + 1;
            if next < self.plan.sessions.len() {
                let (runner, opened) = SessionRunner::start(
                    &self.plan.participant_id,
                    next as u8,
                    self.plan.sessions[next],
                    self.plan.trial_seed(next),
                    self.settings,
                    now_ms,
                );
                let prev = std::mem::replace(&mut self.current, runner);
                self.finished.push(prev);
                step.extend(opened);
            } else {
                self.done = true;
                self.finished.push(self.current.clone());
            }
        }
        step
    }
}
