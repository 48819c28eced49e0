//! Repeated-measures ANOVA for one or two within-subject factors, and the
//! paired t-test.

use std::fmt;

use super::special::{f_survival, student_t_cdf, student_t_two_tailed};
use super::{mean, sample_sd, AnalysisError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Factor {
    pub name: String,
    pub levels: Vec<String>,
}

impl Factor {
    pub fn new(name: &str, levels: &[&str]) -> Self {
        Factor { name: name.into(), levels: levels.iter().map(|s| s.to_string()).collect() }
    }

    fn numbered(name: &str, k: usize) -> Self {
        Factor { name: name.into(), levels: (1..=k).map(|i| i.to_string()).collect() }
    }
}

/// Complete, balanced within-subject data. Values are stored subject-major,
/// then by factor levels with the last factor varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct RmDataset {
    subjects: Vec<String>,
    factors: Vec<Factor>,
    values: Vec<f64>,
}

impl RmDataset {
    pub fn new(subjects: Vec<String>, factors: Vec<Factor>, values: Vec<f64>) -> Result<Self, AnalysisError> {
        if subjects.len() < 2 {
            return Err(AnalysisError::Shape(format!("need at least 2 subjects, got {}", subjects.len())));
        }
        if factors.is_empty() || factors.len() > 2 {
            return Err(AnalysisError::Shape(format!("need 1 or 2 factors, got {}", factors.len())));
        }
        if let Some(f) = factors.iter().find(|f| f.levels.len() < 2) {
            return Err(AnalysisError::Shape(format!("factor {} has fewer than 2 levels", f.name)));
        }
        let cells: usize = factors.iter().map(|f| f.levels.len()).product();
        if values.len() != subjects.len() * cells {
            return Err(AnalysisError::Shape(format!(
                "{} values for {} subjects x {cells} cells",
                values.len(),
                subjects.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AnalysisError::Shape("non-finite value".into()));
        }
        Ok(RmDataset { subjects, factors, values })
    }

    /// n subjects × k conditions.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AnalysisError> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(AnalysisError::Shape("ragged rows".into()));
        }
        RmDataset::new(
            (1..=rows.len()).map(|i| format!("s{i}")).collect(),
            vec![Factor::numbered("A", k)],
            rows.concat(),
        )
    }

    /// n subjects × a levels × b levels.
    pub fn from_cube(data: &[Vec<Vec<f64>>]) -> Result<Self, AnalysisError> {
        let a = data.first().map_or(0, Vec::len);
        let b = data.first().and_then(|s| s.first()).map_or(0, Vec::len);
        if data.iter().any(|s| s.len() != a || s.iter().any(|r| r.len() != b)) {
            return Err(AnalysisError::Shape("ragged array".into()));
        }
        RmDataset::new(
            (1..=data.len()).map(|i| format!("s{i}")).collect(),
            vec![Factor::numbered("A", a), Factor::numbered("B", b)],
            data.iter().flat_map(|s| s.iter().flatten().copied()).collect(),
        )
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    fn cells(&self) -> usize {
        self.values.len() / self.n()
    }

    fn row(&self, s: usize) -> &[f64] {
        let c = self.cells();
        &self.values[s * c..(s + 1) * c]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnovaResult {
    pub effect: String,
    pub df1: u32,
    pub df2: u32,
    pub f: f64,
    pub p: f64,
    pub ss_effect: f64,
    pub ss_error: f64,
}

/// `p = 0.0466`, or `p < 0.001` below that.
pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        "p < 0.001".into()
    } else {
        format!("p = {p:.4}")
    }
}

impl fmt::Display for AnovaResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F({},{}) = {:.4}, {}", self.df1, self.df2, self.f, format_p(self.p))
    }
}

/// Error sums this small next to the total are rounding residue.
fn degenerate(ss_error: f64, ss_total: f64) -> bool {
    !(ss_error > 1e-12 * ss_total)
}

fn test_effect(effect: &str, ss_eff: f64, df1: usize, ss_err: f64, df2: usize, ss_total: f64) -> Result<AnovaResult, AnalysisError> {
    if degenerate(ss_err, ss_total) {
        return Err(AnalysisError::Degenerate(format!("{effect}: error term is zero")));
    }
    let f = (ss_eff / df1 as f64) / (ss_err / df2 as f64);
    Ok(AnovaResult {
        effect: effect.into(),
        df1: df1 as u32,
        df2: df2 as u32,
        f,
        p: f_survival(f, df1 as f64, df2 as f64),
        ss_effect: ss_eff,
        ss_error: ss_err,
    })
}

fn sq(v: f64) -> f64 {
    v * v
}

pub fn rm_anova_oneway(data: &RmDataset) -> Result<AnovaResult, AnalysisError> {
    if data.factors.len() != 1 {
        return Err(AnalysisError::Shape("one-way analysis needs exactly one factor".into()));
    }
    let n = data.n();
    let k = data.cells();
    let grand = mean(&data.values);
    let subj: Vec<f64> = (0..n).map(|s| mean(data.row(s))).collect();
    let cond: Vec<f64> = (0..k).map(|j| (0..n).map(|s| data.row(s)[j]).sum::<f64>() / n as f64).collect();

    let ss_total: f64 = data.values.iter().map(|v| sq(v - grand)).sum();
    let ss_subject = k as f64 * subj.iter().map(|m| sq(m - grand)).sum::<f64>();
    let ss_treat = n as f64 * cond.iter().map(|m| sq(m - grand)).sum::<f64>();
    let ss_error = (ss_total - ss_subject - ss_treat).max(0.0);
    test_effect(&data.factors[0].name, ss_treat, k - 1, ss_error, (k - 1) * (n - 1), ss_total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoWayAnova {
    pub a: Result<AnovaResult, AnalysisError>,
    pub b: Result<AnovaResult, AnalysisError>,
    pub ab: Result<AnovaResult, AnalysisError>,
}

impl TwoWayAnova {
    pub fn effects(&self) -> [&Result<AnovaResult, AnalysisError>; 3] {
        [&self.a, &self.b, &self.ab]
    }
}

/// Each effect is tested against its own effect × subject interaction.
pub fn rm_anova_twoway_within(data: &RmDataset) -> Result<TwoWayAnova, AnalysisError> {
    if data.factors.len() != 2 {
        return Err(AnalysisError::Shape("two-way analysis needs exactly two factors".into()));
    }
    let n = data.n();
    let a = data.factors[0].levels.len();
    let b = data.factors[1].levels.len();
    let x = |s: usize, i: usize, j: usize| data.row(s)[i * b + j];
    let (nf, af, bf) = (n as f64, a as f64, b as f64);

    let grand = mean(&data.values);
    let m_s: Vec<f64> = (0..n).map(|s| mean(data.row(s))).collect();
    let m_a: Vec<f64> = (0..a).map(|i| (0..n).flat_map(|s| (0..b).map(move |j| (s, j))).map(|(s, j)| x(s, i, j)).sum::<f64>() / (nf * bf)).collect();
    let m_b: Vec<f64> = (0..b).map(|j| (0..n).flat_map(|s| (0..a).map(move |i| (s, i))).map(|(s, i)| x(s, i, j)).sum::<f64>() / (nf * af)).collect();
    let m_ab: Vec<Vec<f64>> = (0..a).map(|i| (0..b).map(|j| (0..n).map(|s| x(s, i, j)).sum::<f64>() / nf).collect()).collect();
    let m_as: Vec<Vec<f64>> = (0..a).map(|i| (0..n).map(|s| (0..b).map(|j| x(s, i, j)).sum::<f64>() / bf).collect()).collect();
    let m_bs: Vec<Vec<f64>> = (0..b).map(|j| (0..n).map(|s| (0..a).map(|i| x(s, i, j)).sum::<f64>() / af).collect()).collect();

    let ss_total: f64 = data.values.iter().map(|v| sq(v - grand)).sum();
    let ss_a = nf * bf * m_a.iter().map(|m| sq(m - grand)).sum::<f64>();
    let ss_b = nf * af * m_b.iter().map(|m| sq(m - grand)).sum::<f64>();
    let mut ss_ab = 0.0;
    let mut ss_as = 0.0;
    let mut ss_bs = 0.0;
    let mut ss_abs = 0.0;
    for i in 0..a {
        for j in 0..b {
            ss_ab += nf * sq(m_ab[i][j] - m_a[i] - m_b[j] + grand);
        }
        for s in 0..n {
            ss_as += bf * sq(m_as[i][s] - m_a[i] - m_s[s] + grand);
        }
    }
    for j in 0..b {
        for s in 0..n {
            ss_bs += af * sq(m_bs[j][s] - m_b[j] - m_s[s] + grand);
        }
    }
    for s in 0..n {
        for i in 0..a {
            for j in 0..b {
                let r = x(s, i, j) - m_ab[i][j] - m_as[i][s] - m_bs[j][s] + m_a[i] + m_b[j] + m_s[s] - grand;
                ss_abs += sq(r);
            }
        }
    }

    let fa = &data.factors[0].name;
    let fb = &data.factors[1].name;
    Ok(TwoWayAnova {
        a: test_effect(fa, ss_a, a - 1, ss_as, (a - 1) * (n - 1), ss_total),
        b: test_effect(fb, ss_b, b - 1, ss_bs, (b - 1) * (n - 1), ss_total),
        ab: test_effect(&format!("{fa} x {fb}"), ss_ab, (a - 1) * (b - 1), ss_abs, (a - 1) * (b - 1) * (n - 1), ss_total),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedResult {
    pub t: f64,
    pub df: u32,
    /// Two-tailed.
    pub p: f64,
    pub mean_diff: f64,
    pub sd_diff: f64,
}

impl PairedResult {
    /// One-sided p for the alternative mean(x − y) < 0.
    pub fn p_less(&self) -> f64 {
        student_t_cdf(self.t, self.df as f64)
    }

    /// One-sided p for the alternative mean(x − y) > 0.
    pub fn p_greater(&self) -> f64 {
        student_t_cdf(-self.t, self.df as f64)
    }
}

impl fmt::Display for PairedResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t({}) = {:.4}, {}", self.df, self.t, format_p(self.p))
    }
}

pub fn paired_comparison(x: &[f64], y: &[f64]) -> Result<PairedResult, AnalysisError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(AnalysisError::Shape(format!("paired samples of length {} and {}", x.len(), y.len())));
    }
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let n = d.len() as f64;
    let m = mean(&d);
    let sd = sample_sd(&d);
    let scale = x.iter().chain(y).fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    if !(sd > 64.0 * f64::EPSILON * scale) {
        return Err(AnalysisError::Degenerate("differences have zero spread".into()));
    }
    let t = m / (sd / n.sqrt());
    let df = d.len() - 1;
    Ok(PairedResult { t, df: df as u32, p: student_t_two_tailed(t, df as f64), mean_diff: m, sd_diff: sd })
}
