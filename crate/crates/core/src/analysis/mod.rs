//! Statistics over exported study tables: gaze entropy, per-participant
//! normalization, repeated-measures ANOVA and paired tests, plus the
//! condition summary and entropy heatmap tables.

mod anova;
mod entropy;
mod normalize;
pub mod special;
mod study;

use thiserror::Error;

pub use anova::{
    format_p, paired_comparison, rm_anova_oneway, rm_anova_twoway_within, AnovaResult, Factor, PairedResult,
    RmDataset, TwoWayAnova,
};
pub use entropy::{gaze_entropy, GazeGrid, GridSize};
pub use normalize::{z_normalize, z_normalize_within_participant};
pub use study::{
    condition_summary, entropy_heatmap_export, metric_matrix, session_metric_rows, session_metrics_csv, study_report, ConditionRow,
    ConditionSummary, EntropyHeatmap, Metric, SessionMetricRow,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("entropy is undefined without valid gaze samples")]
    UndefinedEntropy,
    #[error("participant {0} has zero variance")]
    DegenerateGroup(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("bad shape: {0}")]
    Shape(String),
    #[error("missing cells: {}", .0.join(", "))]
    MissingCells(Vec<String>),
    #[error("undefined value: {0}")]
    Undefined(String),
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// n − 1 denominator.
pub(crate) fn sample_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}
