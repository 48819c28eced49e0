//! Per-participant z-scores.

use std::collections::BTreeMap;

use super::{mean, sample_sd, AnalysisError};

/// Spread this close to rounding noise counts as no spread at all.
fn is_degenerate(values: &[f64], sd: f64) -> bool {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    !(sd > 64.0 * f64::EPSILON * scale)
}

/// Centers and scales one group to mean 0 and sample SD 1.
pub fn z_normalize(values: &[f64]) -> Option<Vec<f64>> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values);
    let sd = sample_sd(values);
    if is_degenerate(values, sd) {
        return None;
    }
    Some(values.iter().map(|v| (v - m) / sd).collect())
}

pub fn z_normalize_within_participant(
    groups: &BTreeMap<String, Vec<f64>>,
) -> Result<BTreeMap<String, Vec<f64>>, AnalysisError> {
    groups
        .iter()
        .map(|(p, v)| {
            if v.len() < 2 {
                return Err(AnalysisError::Shape(format!("participant {p} has {} value(s), need at least 2", v.len())));
            }
            z_normalize(v)
                .map(|z| (p.clone(), z))
                .ok_or_else(|| AnalysisError::DegenerateGroup(p.clone()))
        })
        .collect()
}
