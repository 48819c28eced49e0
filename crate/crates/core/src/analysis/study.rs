//! Study-level analysis over the exported tables.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::str::FromStr;

use super::anova::{paired_comparison, rm_anova_oneway, rm_anova_twoway_within, Factor, RmDataset};
use super::{gaze_entropy, mean, sample_sd, z_normalize, AnalysisError, GridSize};
use crate::controller::FeedbackMode;
use crate::event_log::Tables;
use crate::gaze::GazeSample;
use crate::session::{SessionConfig, SESSIONS_PER_STUDY};
use crate::task::{session_metrics, DurationClass, TrialOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Rt,
    Missed,
    Accuracy,
    Entropy,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Rt, Metric::Missed, Metric::Accuracy, Metric::Entropy];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Rt => "rt",
            Metric::Missed => "missed",
            Metric::Accuracy => "accuracy",
            Metric::Entropy => "entropy",
        }
    }
}

impl FromStr for Metric {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| AnalysisError::Shape(format!("unknown metric {s:?} (rt, missed, accuracy, entropy)")))
    }
}

/// Raw per-session values. `rt_ms` is absent when no response was correct,
/// `entropy` when the task window holds no valid gaze.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionMetricRow {
    pub participant: String,
    pub session: u8,
    pub config: SessionConfig,
    pub rt_ms: Option<f64>,
    pub missed: f64,
    pub accuracy: f64,
    pub entropy: Option<f64>,
}

impl SessionMetricRow {
    pub fn get(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Rt => self.rt_ms,
            Metric::Missed => Some(self.missed),
            Metric::Accuracy => Some(self.accuracy),
            Metric::Entropy => self.entropy,
        }
    }
}

pub fn session_metric_rows(tables: &Tables, grid: GridSize) -> Result<Vec<SessionMetricRow>, AnalysisError> {
    let mut trials: HashMap<(&str, u8), Vec<(u8, TrialOutcome)>> = HashMap::new();
    for t in &tables.trials {
        let o = TrialOutcome { responded: t.responded, key: t.key, rt_ms: t.rt_ms, correct: t.correct, missed: t.missed };
        trials.entry((&t.participant, t.session)).or_default().push((t.trial, o));
    }
    let mut gaze: HashMap<(&str, u8), Vec<GazeSample>> = HashMap::new();
    for g in &tables.gaze {
        gaze.entry((&g.participant, g.session)).or_default().push(g.sample());
    }

    let mut rows = Vec::with_capacity(tables.sessions.len());
    for s in &tables.sessions {
        let key = (s.participant.as_str(), s.session);
        let mut outcomes = trials.remove(&key).unwrap_or_default();
        outcomes.sort_by_key(|(i, _)| *i);
        let outcomes: Vec<TrialOutcome> = outcomes.into_iter().map(|(_, o)| o).collect();
        let m = session_metrics(&outcomes)
            .map_err(|e| AnalysisError::Shape(format!("{}/{}: {e}", s.participant, s.session)))?;
        let in_task: Vec<GazeSample> = gaze
            .get(&key)
            .map(|v| v.iter().filter(|g| g.ts_ms >= s.start_ts && g.ts_ms <= s.end_ts).copied().collect())
            .unwrap_or_default();
        let entropy = match gaze_entropy(&in_task, grid.rows, grid.cols) {
            Ok(h) => Some(h),
            Err(AnalysisError::UndefinedEntropy) => None,
            Err(e) => return Err(e),
        };
        rows.push(SessionMetricRow {
            participant: s.participant.clone(),
            session: s.session,
            config: s.config(),
            rt_ms: m.mean_rt_ms,
            missed: m.missed_count as f64,
            accuracy: m.accuracy,
            entropy,
        });
    }
    Ok(rows)
}

/// Participant → twelve raw values in [`SessionConfig::all`] order.
pub fn metric_matrix(rows: &[SessionMetricRow], metric: Metric) -> Result<BTreeMap<String, Vec<f64>>, AnalysisError> {
    let configs = SessionConfig::all();
    let mut cells: BTreeMap<String, Vec<Option<Option<f64>>>> = BTreeMap::new();
    for r in rows {
        let slot = &mut cells.entry(r.participant.clone()).or_insert_with(|| vec![None; SESSIONS_PER_STUDY])[r.config.ordinal()];
        if slot.is_some() {
            return Err(AnalysisError::Shape(format!("{} has two {} sessions", r.participant, r.config.label())));
        }
        *slot = Some(r.get(metric));
    }
    let mut missing = Vec::new();
    let mut undefined = Vec::new();
    for (p, v) in &cells {
        for (c, cell) in configs.iter().zip(v) {
            match cell {
                None => missing.push(format!("{p} {}", c.label())),
                Some(None) => undefined.push(format!("{} for {p} {}", metric.as_str(), c.label())),
                Some(Some(_)) => {}
            }
        }
    }
    if !missing.is_empty() {
        return Err(AnalysisError::MissingCells(missing));
    }
    if !undefined.is_empty() {
        return Err(AnalysisError::Undefined(undefined.join(", ")));
    }
    Ok(cells.into_iter().map(|(p, v)| (p, v.into_iter().map(|c| c.flatten().unwrap()).collect())).collect())
}

fn normalized_matrix(rows: &[SessionMetricRow], metric: Metric) -> Result<BTreeMap<String, Vec<f64>>, AnalysisError> {
    let raw = metric_matrix(rows, metric)?;
    if raw.len() < 2 {
        return Err(AnalysisError::Shape(format!("need at least 2 participants, got {}", raw.len())));
    }
    raw.into_iter()
        .map(|(p, v)| match z_normalize(&v) {
            Some(z) => Ok((p, z)),
            None => Err(AnalysisError::DegenerateGroup(format!("{p} ({})", metric.as_str()))),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionRow {
    pub config: SessionConfig,
    /// (mean, sd) of the normalized metric, indexed like [`Metric::ALL`].
    pub stats: [(f64, f64); 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSummary {
    pub participants: usize,
    pub rows: Vec<ConditionRow>,
}

impl ConditionSummary {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["feedback".to_string(), "duration".into(), "distraction".into()];
        for m in Metric::ALL {
            header.push(format!("{}_mean", m.as_str()));
            header.push(format!("{}_sd", m.as_str()));
        }
        w.write_record(&header).expect("in-memory write");
        for r in &self.rows {
            let mut rec = vec![
                r.config.feedback.as_str().to_string(),
                r.config.duration.as_str().to_string(),
                r.config.distraction.to_string(),
            ];
            for (m, s) in r.stats {
                rec.push(m.to_string());
                rec.push(s.to_string());
            }
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

pub fn condition_summary(tables: &Tables, grid: GridSize) -> Result<ConditionSummary, AnalysisError> {
    let rows = session_metric_rows(tables, grid)?;
    let mut norm = Vec::new();
    for m in Metric::ALL {
        norm.push(normalized_matrix(&rows, m)?);
    }
    let participants = norm[0].len();
    let rows = SessionConfig::all()
        .into_iter()
        .enumerate()
        .map(|(c, config)| {
            let mut stats = [(0.0, 0.0); 4];
            for (k, z) in norm.iter().enumerate() {
                let col: Vec<f64> = z.values().map(|v| v[c]).collect();
                stats[k] = (mean(&col), sample_sd(&col));
            }
            ConditionRow { config, stats }
        })
        .collect();
    Ok(ConditionSummary { participants, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyHeatmap {
    pub participants: Vec<String>,
    /// One row per participant, columns in [`SessionConfig::all`] order.
    pub values: Vec<Vec<f64>>,
}

impl EntropyHeatmap {
    pub fn shape(&self) -> (usize, usize) {
        (self.values.len(), SESSIONS_PER_STUDY)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["participant".to_string()];
        header.extend(SessionConfig::all().iter().map(SessionConfig::label));
        w.write_record(&header).expect("in-memory write");
        for (p, v) in self.participants.iter().zip(&self.values) {
            let mut rec = vec![p.clone()];
            rec.extend(v.iter().map(f64::to_string));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

pub fn entropy_heatmap_export(tables: &Tables, grid: GridSize) -> Result<EntropyHeatmap, AnalysisError> {
    let rows = session_metric_rows(tables, grid)?;
    let m = metric_matrix(&rows, Metric::Entropy)?;
    Ok(EntropyHeatmap { participants: m.keys().cloned().collect(), values: m.into_values().collect() })
}

pub fn session_metrics_csv(rows: &[SessionMetricRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["participant", "session", "feedback", "duration", "distraction", "rt_ms", "missed", "accuracy", "entropy"])
        .expect("in-memory write");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.participant.clone(),
            r.session.to_string(),
            r.config.feedback.as_str().into(),
            r.config.duration.as_str().into(),
            r.config.distraction.to_string(),
            opt(r.rt_ms),
            r.missed.to_string(),
            r.accuracy.to_string(),
            opt(r.entropy),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

fn cell_mean(z: &[f64], pick: impl Fn(&SessionConfig) -> bool) -> f64 {
    let v: Vec<f64> = SessionConfig::all().iter().zip(z).filter(|(c, _)| pick(c)).map(|(_, v)| *v).collect();
    mean(&v)
}

fn write_metric_section(out: &mut String, z: &BTreeMap<String, Vec<f64>>) -> Result<(), AnalysisError> {
    let subjects: Vec<String> = z.keys().cloned().collect();
    let fb_levels: Vec<&str> = FeedbackMode::ALL.iter().map(|f| f.as_str()).collect();
    let dur_levels: Vec<&str> = DurationClass::ALL.iter().map(|d| d.as_str()).collect();
    let line = |out: &mut String, label: &str, r: Result<String, AnalysisError>| {
        let _ = match r {
            Ok(s) => writeln!(out, "  {label}: {s}"),
            Err(e) => writeln!(out, "  {label}: skipped ({e})"),
        };
    };

    let _ = writeln!(out, "feedback x duration, averaged over distraction");
    let mut vals = Vec::new();
    for v in z.values() {
        for f in FeedbackMode::ALL {
            for d in DurationClass::ALL {
                vals.push(cell_mean(v, |c| c.feedback == f && c.duration == d));
            }
        }
    }
    let ds = RmDataset::new(subjects.clone(), vec![Factor::new("feedback", &fb_levels), Factor::new("duration", &dur_levels)], vals)?;
    let two = rm_anova_twoway_within(&ds)?;
    for e in two.effects() {
        let name = match e {
            Ok(r) => r.effect.clone(),
            Err(_) => "effect".into(),
        };
        line(out, &name, e.clone().map(|r| r.to_string()));
    }

    let _ = writeln!(out, "distraction, averaged over feedback and duration");
    let mut vals = Vec::new();
    for v in z.values() {
        for dist in [false, true] {
            vals.push(cell_mean(v, |c| c.distraction == dist));
        }
    }
    let ds = RmDataset::new(subjects.clone(), vec![Factor::new("distraction", &["quiet", "distraction"])], vals)?;
    line(out, "distraction", rm_anova_oneway(&ds).map(|r| r.to_string()));

    for d in DurationClass::ALL {
        for dist in [false, true] {
            let stratum = format!("{}/{}", d.as_str(), if dist { "distraction" } else { "quiet" });
            let _ = writeln!(out, "feedback within {stratum}");
            let col = |f: FeedbackMode| -> Vec<f64> {
                let o = SessionConfig { feedback: f, duration: d, distraction: dist }.ordinal();
                z.values().map(|v| v[o]).collect()
            };
            let cols: Vec<Vec<f64>> = FeedbackMode::ALL.iter().map(|&f| col(f)).collect();
            let mut vals = Vec::new();
            for s in 0..subjects.len() {
                for c in &cols {
                    vals.push(c[s]);
                }
            }
            let ds = RmDataset::new(subjects.clone(), vec![Factor::new("feedback", &fb_levels)], vals)?;
            line(out, "feedback", rm_anova_oneway(&ds).map(|r| r.to_string()));
            let desc: Vec<String> = FeedbackMode::ALL
                .iter()
                .zip(&cols)
                .map(|(f, c)| format!("{} {:.4} ± {:.4}", f.as_str(), mean(c), sample_sd(c)))
                .collect();
            let _ = writeln!(out, "  {}", desc.join(", "));
            for (i, j) in [(1, 0), (2, 0), (2, 1)] {
                let label = format!("{} vs {}", FeedbackMode::ALL[i].as_str(), FeedbackMode::ALL[j].as_str());
                line(out, &label, paired_comparison(&cols[i], &cols[j]).map(|r| r.to_string()));
            }
        }
    }
    Ok(())
}

/// Plain-text statistics for each requested metric, computed on values
/// z-normalized within participant.
pub fn study_report(tables: &Tables, grid: GridSize, metrics: &[Metric]) -> Result<String, AnalysisError> {
    let rows = session_metric_rows(tables, grid)?;
    let participants: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.participant.as_str()).collect();
    let mut out = String::new();
    let _ = writeln!(out, "participants: {}", participants.len());
    let _ = writeln!(out, "sessions: {}", rows.len());
    let _ = writeln!(out, "entropy grid: {grid}");
    for &m in metrics {
        let _ = writeln!(out);
        let _ = writeln!(out, "== {} ==", m.as_str());
        match normalized_matrix(&rows, m) {
            Ok(z) => write_metric_section(&mut out, &z)?,
            Err(e) => {
                let _ = writeln!(out, "skipped: {e}");
            }
        }
    }
    Ok(out)
}
