//! Virtual participant.
//!
//! The agent talks to a [`SessionRunner`] exactly as the browser client
//! would: calibration clicks, a key press to start, a gaze stream at
//! `sample_hz`, key presses for the vigilance task, the questionnaire and a
//! rest. Gaze follows a noisy spring toward the screen center. During a
//! lapse the spring weakens and a pull toward a random off-center target
//! takes over. Tactile onsets reach the agent only through the intents the
//! session emits, and each one ends a lapse with probability `rho`.

mod params;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub use params::AgentParams;

use crate::controller::ActuatorIntent;
use crate::event_log::{EventRecord, LogError, LogSet, SessionData, Tables};
use crate::gaze::{GazeSample, CENTER};
use crate::session::wire::{Inbound, Outbound};
use crate::session::{
    derive_seed, generate_study_plan, SessionConfig, SessionPhase, SessionRunner, SessionSettings, StudyPlan,
};
use crate::task::{Key, TrialOutcome};

/// Distance beyond which a lapsing agent does not notice a stimulus.
pub const MISS_DISTANCE: f64 = 0.35;

const CALIBRATION_GRID: [f64; 3] = [0.1, 0.5, 0.9];
const CLICK_GAP_MS: u64 = 400;
const READY_MS: u64 = 2_000;
const QUESTIONNAIRE_MS: u64 = 3_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid agent parameters: {0}")]
    Config(String),
    #[error("session rejected a message: {0}")]
    Rejected(String),
    #[error("session did not finish: {0}")]
    Stalled(String),
}

/// One simulated session with both its log and the live view of it.
#[derive(Debug, Clone)]
pub struct SimulatedSession {
    pub config: SessionConfig,
    pub records: Vec<EventRecord>,
    pub intents: Vec<ActuatorIntent>,
    pub outcomes: Vec<TrialOutcome>,
    pub data: SessionData,
    /// Tactile onsets the agent felt while lapsing, with whether each ended
    /// the lapse.
    pub felt: Vec<(ActuatorIntent, bool)>,
    pub lapse_ms: u64,
    pub lapses: u32,
    pub end_ms: u64,
}

impl SimulatedSession {
    /// Entropy-relevant gaze: samples inside the task window.
    pub fn task_gaze(&self) -> impl Iterator<Item = &GazeSample> {
        let (a, b) = (self.data.start_ts, self.data.end_ts);
        self.data.gaze.iter().filter(move |g| g.ts_ms >= a && g.ts_ms <= b)
    }
}

/// Everything that identifies one session run.
#[derive(Debug, Clone)]
pub struct SessionSpec<'a> {
    pub participant: &'a str,
    pub index: u8,
    pub config: SessionConfig,
    pub trial_seed: u64,
    pub agent_seed: u64,
    pub start_ms: u64,
    pub settings: SessionSettings,
}

struct Agent<'p> {
    p: &'p AgentParams,
    rng: ChaCha8Rng,
    /// Separate stream for reactions to touch, so the gaze path does not
    /// depend on how many tactile onsets happened.
    touch_rng: ChaCha8Rng,
    x: f64,
    y: f64,
    lapse_target: Option<(f64, f64)>,
    lapse_ms: u64,
    lapses: u32,
}

impl Agent<'_> {
    fn distance(&self) -> f64 {
        (self.x - CENTER.0).hypot(self.y - CENTER.1)
    }

    fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    fn start_lapse(&mut self) {
        let theta = self.rng.gen_range(0.0..std::f64::consts::TAU);
        let r = if self.p.wander_radius_max > self.p.wander_radius_min {
            self.rng.gen_range(self.p.wander_radius_min..=self.p.wander_radius_max)
        } else {
            self.p.wander_radius_min
        };
        let tx = (CENTER.0 + r * theta.cos()).clamp(0.0, 1.0);
        let ty = (CENTER.1 + r * theta.sin()).clamp(0.0, 1.0);
        self.lapse_target = Some((tx, ty));
        self.lapses += 1;
    }

    /// Advances attention and gaze by `dt_ms`. `task_min` is the time on
    /// task in minutes, `None` before the first trial.
    fn advance(&mut self, dt_ms: u64, task_min: Option<f64>, distraction: bool) {
        let dt = dt_ms as f64 / 1000.0;
        if let Some(min) = task_min {
            match self.lapse_target {
                None => {
                    let mult = if distraction { self.p.distraction_mult } else { 1.0 };
                    let per_s = (self.p.lambda0 + self.p.lambda1 * min) * mult / 60.0;
                    if self.rng.gen::<f64>() < 1.0 - (-per_s * dt).exp() {
                        self.start_lapse();
                    }
                }
                Some(_) => {
                    self.lapse_ms += dt_ms;
                    if self.rng.gen::<f64>() < 1.0 - (-self.p.recovery_rate * dt).exp() {
                        self.lapse_target = None;
                    }
                }
            }
        }
        let (kappa, pull) = match self.lapse_target {
            None => (self.p.kappa_attentive, None),
            Some(t) => (self.p.kappa_lapse, Some(t)),
        };
        let noise = self.p.sigma * dt.sqrt();
        let (nx, ny) = (self.normal(), self.normal());
        let mut dx = kappa * (CENTER.0 - self.x) * dt + noise * nx;
        let mut dy = kappa * (CENTER.1 - self.y) * dt + noise * ny;
        if let Some((tx, ty)) = pull {
            dx += self.p.wander_gain * (tx - self.x) * dt;
            dy += self.p.wander_gain * (ty - self.y) * dt;
        }
        self.x = (self.x + dx).clamp(0.0, 1.0);
        self.y = (self.y + dy).clamp(0.0, 1.0);
    }

    fn response_time(&mut self, window_ms: u64) -> u64 {
        let rt = self.p.rt_base_ms + self.p.rt_slope_ms_per_unit_dist * self.distance() + self.p.rt_noise_ms * self.normal();
        (rt.round().max(1.0) as u64).min(window_ms)
    }
}

struct Driver<'a> {
    runner: SessionRunner,
    records: Vec<EventRecord>,
    intents: Vec<ActuatorIntent>,
    gaze: Vec<GazeSample>,
    felt: Vec<(ActuatorIntent, bool)>,
    agent: Agent<'a>,
    press: Option<(u64, Key)>,
    window_ms: u64,
}

impl Driver<'_> {
    fn send(&mut self, msg: Inbound, now: u64) -> Result<(), SimError> {
        let step = self.runner.handle(&msg, now, now);
        self.absorb(step, now)
    }

    fn absorb(&mut self, step: crate::session::Step, now: u64) -> Result<(), SimError> {
        if let Some(code) = step.errors().next() {
            return Err(SimError::Rejected(format!("{code} at {now} ms")));
        }
        for i in &step.intents {
            if i.active && self.agent.lapse_target.is_some() {
                let ends = self.agent.touch_rng.gen::<f64>() < self.agent.p.rho;
                if ends {
                    self.agent.lapse_target = None;
                }
                self.felt.push((*i, ends));
            }
        }
        for (ts, out) in &step.outbound {
            if let Outbound::TrialOnset { index, shape, .. } = out {
                self.on_onset(*index, *shape, *ts);
            }
        }
        self.intents.extend(step.intents);
        self.records.extend(step.records);
        Ok(())
    }

    fn on_onset(&mut self, index: u8, shape: crate::task::StimulusShape, onset: u64) {
        let Some(key) = shape.expected_key() else { return };
        if self.agent.lapse_target.is_some() && self.agent.distance() > MISS_DISTANCE {
            return;
        }
        let plan = self.runner.plan();
        let window = match plan.get(index as usize + 1) {
            Some(next) => next.pre_interval_ms.min(self.window_ms),
            None => self.window_ms,
        };
        let rt = self.agent.response_time(window);
        self.press = Some((onset + rt, key));
    }

}

pub fn simulate_session_with(spec: &SessionSpec<'_>, params: &AgentParams) -> Result<SimulatedSession, SimError> {
    params.validate()?;
    let (runner, step) = SessionRunner::start(
        spec.participant,
        spec.index,
        spec.config,
        spec.trial_seed,
        spec.settings,
        spec.start_ms,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(spec.agent_seed);
    let touch_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.agent_seed, 0x70_75_63_68));
    let ratings: [i64; 6] = std::array::from_fn(|_| rng.gen_range(1..=7));
    let agent = Agent { p: params, rng, touch_rng, x: CENTER.0, y: CENTER.1, lapse_target: None, lapse_ms: 0, lapses: 0 };
    let mut d = Driver {
        runner,
        records: Vec::new(),
        intents: Vec::new(),
        gaze: Vec::new(),
        felt: Vec::new(),
        agent,
        press: None,
        window_ms: spec.settings.window_ms,
    };
    d.absorb(step, spec.start_ms)?;

    let mut t = spec.start_ms;
    for &y in &CALIBRATION_GRID {
        for &x in &CALIBRATION_GRID {
            t += CLICK_GAP_MS;
            d.send(Inbound::CalibrationPoint { x, y }, t)?;
        }
    }
    t += CLICK_GAP_MS;
    d.send(Inbound::CalibrationDone { count: 9 }, t)?;

    let gaze_epoch = t;
    let period_ms = 1000.0 / params.sample_hz;
    let mut k: u64 = 1;
    let mut start_key = Some(t + READY_MS);
    let mut last_sample = t;
    let mut task_start: Option<u64> = None;
    let distraction = spec.config.distraction;

    while d.runner.phase() != SessionPhase::Questionnaire {
        let next_gaze = gaze_epoch + (k as f64 * period_ms).round() as u64;
        let press_at = d.press.map(|(ts, _)| ts);
        let msg_at = [Some(next_gaze), press_at, start_key].into_iter().flatten().min().expect("gaze always due");
        if let Some(dl) = d.runner.next_deadline() {
            if dl < msg_at {
                let step = d.runner.tick(dl);
                d.absorb(step, dl)?;
                continue;
            }
        }
        if press_at == Some(msg_at) {
            let (ts, key) = d.press.take().expect("checked");
            d.send(Inbound::KeyEvent { key }, ts)?;
        } else if start_key == Some(msg_at) {
            start_key = None;
            d.send(Inbound::KeyEvent { key: Key::Left }, msg_at)?;
            task_start = Some(msg_at);
        } else {
            let task_min = task_start.map(|s| (next_gaze - s) as f64 / 60_000.0);
            d.agent.advance(next_gaze - last_sample, task_min, distraction);
            last_sample = next_gaze;
            k += 1;
            let s = GazeSample::new(next_gaze, d.agent.x, d.agent.y);
            d.gaze.push(s);
            d.send(Inbound::GazeSample { x: Some(s.x), y: Some(s.y), valid: true }, next_gaze)?;
        }
        if k > 100_000_000 {
            return Err(SimError::Stalled("gaze stream ran past any plausible session length".into()));
        }
    }

    let (task_a, task_b) = d.runner.task_window().ok_or_else(|| SimError::Stalled("no task window".into()))?;
    let mut t = task_b + QUESTIONNAIRE_MS;
    d.send(Inbound::Questionnaire(ratings), t)?;
    t += spec.settings.min_rest_ms;
    d.send(Inbound::RestExitRequest, t)?;
    if !d.runner.is_finished() {
        return Err(SimError::Stalled(format!("ended in {}", d.runner.phase().name())));
    }

    let outcomes = d.runner.outcomes().to_vec();
    let data = SessionData {
        participant: spec.participant.to_owned(),
        session: spec.index,
        config: spec.config,
        start_ts: task_a,
        end_ts: task_b,
        shapes: d.runner.plan().iter().map(|s| s.shape).collect(),
        outcomes: outcomes.clone(),
        gaze: d.gaze,
        questionnaire: d.runner.questionnaire(),
    };
    Ok(SimulatedSession {
        config: spec.config,
        records: d.records,
        intents: d.intents,
        outcomes,
        data,
        felt: d.felt,
        lapse_ms: d.agent.lapse_ms,
        lapses: d.agent.lapses,
        end_ms: t,
    })
}

/// A single session for participant `sim`, with trial and agent streams
/// derived from `seed`.
pub fn simulate_session(config: SessionConfig, params: &AgentParams, seed: u64) -> Result<SimulatedSession, SimError> {
    simulate_session_with(
        &SessionSpec {
            participant: "sim",
            index: 0,
            config,
            trial_seed: derive_seed(seed, 0),
            agent_seed: derive_seed(seed, 1),
            start_ms: 0,
            settings: SessionSettings::default(),
        },
        params,
    )
}

#[derive(Debug, Clone)]
pub struct SimulatedParticipant {
    pub id: String,
    pub plan: StudyPlan,
    pub params: AgentParams,
    pub sessions: Vec<SimulatedSession>,
}

#[derive(Debug, Clone)]
pub struct SimulatedStudy {
    pub seed: u64,
    pub participants: Vec<SimulatedParticipant>,
}

impl SimulatedStudy {
    pub fn sessions(&self) -> impl Iterator<Item = &SimulatedSession> {
        self.participants.iter().flat_map(|p| &p.sessions)
    }

    /// Tables built from the live session state, without going through
    /// the logs.
    pub fn tables(&self) -> Tables {
        Tables::from_sessions(self.sessions().map(|s| &s.data))
    }

    pub fn write_logs(&self, dir: &Path) -> Result<(), LogError> {
        let mut logs = LogSet::new(dir);
        for r in self.sessions().flat_map(|s| &s.records) {
            logs.append(r)?;
        }
        logs.sync()
    }
}

pub fn participant_id(i: usize, n: usize) -> String {
    let width = n.to_string().len().max(2);
    format!("p{:0width$}", i + 1)
}

/// Plan, jittered parameters and agent seed stream for one participant.
pub fn participant_setup(i: usize, n: usize, params: &AgentParams, seed: u64) -> (String, StudyPlan, AgentParams, u64) {
    let id = participant_id(i, n);
    let pseed = derive_seed(seed, i as u64);
    let plan = generate_study_plan(&id, pseed);
    let mut jrng = ChaCha8Rng::seed_from_u64(derive_seed(pseed, 0x6a_69_74));
    let p = params.jittered(&mut jrng);
    (id, plan, p, derive_seed(pseed, 0x61_67_65_6e_74))
}

/// Runs one participant's sessions in plan order, each starting when the
/// previous one ended. `keep` selects which sessions are simulated.
pub fn simulate_participant(
    i: usize,
    n: usize,
    params: &AgentParams,
    seed: u64,
    keep: impl Fn(&SessionConfig) -> bool,
) -> Result<SimulatedParticipant, SimError> {
    let (id, plan, p, agent_stream) = participant_setup(i, n, params, seed);
    let mut sessions = Vec::new();
    let mut clock = 0;
    for (idx, config) in plan.sessions.iter().enumerate() {
        if !keep(config) {
            continue;
        }
        let spec = SessionSpec {
            participant: &id,
            index: idx as u8,
            config: *config,
            trial_seed: plan.trial_seed(idx),
            agent_seed: derive_seed(agent_stream, idx as u64),
            start_ms: clock,
            settings: SessionSettings::default(),
        };
        let s = simulate_session_with(&spec, &p)?;
        clock = s.end_ms;
        sessions.push(s);
    }
    Ok(SimulatedParticipant { id, plan, params: p, sessions })
}

pub fn simulate_study(n_participants: usize, params: &AgentParams, seed: u64) -> Result<SimulatedStudy, SimError> {
    if n_participants < 2 {
        return Err(SimError::Config(format!("a study needs at least 2 participants, got {n_participants}")));
    }
    params.validate()?;
    let participants = (0..n_participants)
        .map(|i| simulate_participant(i, n_participants, params, seed, |_| true))
        .collect::<Result<_, _>>()?;
    Ok(SimulatedStudy { seed, participants })
}
