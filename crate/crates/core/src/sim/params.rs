use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::SimError;

/// Behavioural parameters of the virtual participant. Rates are per second
/// unless the name says otherwise; the lapse hazard is per minute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentParams {
    /// Spring gain pulling gaze to the screen center while attentive.
    pub kappa_attentive: f64,
    /// Weaker center spring during a lapse.
    pub kappa_lapse: f64,
    /// Gain toward the wander target drawn at the start of each lapse.
    pub wander_gain: f64,
    /// Wander targets lie this far from the center, uniformly in between.
    pub wander_radius_min: f64,
    pub wander_radius_max: f64,
    /// Gaze noise, per square-root second.
    pub sigma: f64,
    /// Lapse hazard `(lambda0 + lambda1 * minutes_into_task)` per minute.
    pub lambda0: f64,
    pub lambda1: f64,
    pub distraction_mult: f64,
    /// Spontaneous lapse exit rate.
    pub recovery_rate: f64,
    /// Chance that one tactile onset ends a lapse.
    pub rho: f64,
    pub rt_base_ms: f64,
    pub rt_slope_ms_per_unit_dist: f64,
    pub rt_noise_ms: f64,
    pub sample_hz: f64,
}

impl Default for AgentParams {
    fn default() -> Self {
        AgentParams {
            kappa_attentive: 4.0,
            kappa_lapse: 0.2,
            wander_gain: 2.0,
            wander_radius_min: 0.3,
            wander_radius_max: 0.6,
            sigma: 0.05,
            lambda0: 0.5,
            lambda1: 0.8,
            distraction_mult: 2.0,
            recovery_rate: 0.05,
            rho: 0.8,
            rt_base_ms: 450.0,
            rt_slope_ms_per_unit_dist: 800.0,
            rt_noise_ms: 60.0,
            sample_hz: 30.0,
        }
    }
}

impl AgentParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let nonneg = [
            ("kappa_attentive", self.kappa_attentive),
            ("kappa_lapse", self.kappa_lapse),
            ("wander_gain", self.wander_gain),
            ("wander_radius_min", self.wander_radius_min),
            ("sigma", self.sigma),
            ("lambda0", self.lambda0),
            ("lambda1", self.lambda1),
            ("recovery_rate", self.recovery_rate),
            ("rt_base_ms", self.rt_base_ms),
            ("rt_slope_ms_per_unit_dist", self.rt_slope_ms_per_unit_dist),
            ("rt_noise_ms", self.rt_noise_ms),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SimError::Config(format!("{name} must be a nonnegative number, got {v}")));
            }
        }
        if self.kappa_lapse > self.kappa_attentive {
            return Err(SimError::Config("kappa_lapse exceeds kappa_attentive".into()));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(SimError::Config(format!("rho must lie in [0, 1], got {}", self.rho)));
        }
        if !(self.distraction_mult >= 1.0 && self.distraction_mult.is_finite()) {
            return Err(SimError::Config(format!("distraction_mult must be at least 1, got {}", self.distraction_mult)));
        }
        if !(self.wander_radius_max >= self.wander_radius_min && self.wander_radius_max.is_finite()) {
            return Err(SimError::Config("wander_radius_max is below wander_radius_min".into()));
        }
        if !(self.sample_hz > 0.0 && self.sample_hz <= 1000.0) {
            return Err(SimError::Config(format!("sample_hz must lie in (0, 1000], got {}", self.sample_hz)));
        }
        Ok(())
    }

    /// Reads a flat `key = value` file; missing keys keep their defaults.
    pub fn from_toml_str(s: &str) -> Result<Self, SimError> {
        let p: AgentParams = toml::from_str(s).map_err(|e| SimError::Config(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let s = std::fs::read_to_string(path).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat struct serializes")
    }

    /// Per-participant variant: every gain, rate and response-time term is
    /// scaled by its own lognormal factor with scale ln 1.1.
    pub fn jittered<R: Rng>(&self, rng: &mut R) -> AgentParams {
        let ln = LogNormal::new(0.0, 1.1f64.ln()).expect("finite scale");
        let mut j = |v: f64| v * ln.sample(rng);
        let mut p = *self;
        p.kappa_attentive = j(p.kappa_attentive);
        p.kappa_lapse = j(p.kappa_lapse).min(p.kappa_attentive);
        p.wander_gain = j(p.wander_gain);
        p.sigma = j(p.sigma);
        p.lambda0 = j(p.lambda0);
        p.lambda1 = j(p.lambda1);
        p.distraction_mult = j(p.distraction_mult).max(1.0);
        p.recovery_rate = j(p.recovery_rate);
        p.rt_base_ms = j(p.rt_base_ms);
        p.rt_slope_ms_per_unit_dist = j(p.rt_slope_ms_per_unit_dist);
        p.rt_noise_ms = j(p.rt_noise_ms);
        p
    }
}
