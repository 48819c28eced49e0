//! Stationary gaze entropy over a uniform screen grid.

use std::fmt;
use std::str::FromStr;

use super::AnalysisError;
use crate::gaze::GazeSample;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GazeGrid {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `rows * cols` cells.
    pub counts: Vec<u64>,
}

/// Grid geometry, parsed from strings like `8x8`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSize {
    pub rows: usize,
    pub cols: usize,
}

impl Default for GridSize {
    fn default() -> Self {
        GridSize { rows: 8, cols: 8 }
    }
}

impl FromStr for GridSize {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || AnalysisError::Shape(format!("grid {s:?} is not ROWSxCOLS with positive sizes"));
        let (r, c) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        let rows: usize = r.trim().parse().map_err(|_| bad())?;
        let cols: usize = c.trim().parse().map_err(|_| bad())?;
        if rows == 0 || cols == 0 {
            return Err(bad());
        }
        Ok(GridSize { rows, cols })
    }
}

impl fmt::Display for GridSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

fn bin(v: f64, n: usize) -> usize {
    ((v * n as f64).floor() as usize).min(n - 1)
}

impl GazeGrid {
    pub fn new(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "grid needs at least one cell");
        GazeGrid { rows, cols, counts: vec![0; rows * cols] }
    }

    /// Counts the sample if it is usable. Returns whether it was binned.
    pub fn add(&mut self, s: &GazeSample) -> bool {
        if !s.is_usable() {
            return false;
        }
        let (r, c) = (bin(s.y, self.rows), bin(s.x, self.cols));
        self.counts[r * self.cols + c] += 1;
        true
    }

    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a GazeSample>, rows: usize, cols: usize) -> Self {
        let mut g = GazeGrid::new(rows, cols);
        for s in samples {
            g.add(s);
        }
        g
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Shannon entropy of the cell distribution, in bits.
    pub fn entropy(&self) -> Result<f64, AnalysisError> {
        let total = self.total();
        if total == 0 {
            return Err(AnalysisError::UndefinedEntropy);
        }
        let n = total as f64;
        let h: f64 = self
            .counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.log2()
            })
            .sum();
        Ok(h.max(0.0))
    }
}

pub fn gaze_entropy<'a>(
    samples: impl IntoIterator<Item = &'a GazeSample>,
    rows: usize,
    cols: usize,
) -> Result<f64, AnalysisError> {
    GazeGrid::from_samples(samples, rows, cols).entropy()
}
