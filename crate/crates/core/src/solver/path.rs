use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

/// A jump that was applied at grid index `index`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AppliedJump {
    pub index: usize,
    pub time: f64,
    pub left: f64,
    pub mark: f64,
    pub size: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Scheme {
    /// Largest grid cell.
    pub step: f64,
    /// Mollification level, `None` for raw coefficients.
    pub level: Option<u32>,
    pub coefficients: String,
    pub seed: u64,
}

/// A càdlàg numerical path. `values[i]` is the value at `times[i]` (post-jump),
/// `left[i]` its left limit; `steps[i]` is the continuous Euler increment over
/// cell `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSolution {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub left: Vec<f64>,
    pub steps: Vec<f64>,
    pub jumps: Vec<AppliedJump>,
    pub scheme: Scheme,
}

impl PathSolution {
    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn x0(&self) -> f64 {
        self.values[0]
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Index `i` with `times[i] <= t < times[i + 1]`, clamped to the last point.
    pub fn index_at(&self, t: f64) -> usize {
        match self.times.binary_search_by(|s| s.total_cmp(&t)) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) => i - 1,
        }
    }

    /// Value at time `t` by the càdlàg (piecewise-constant) reading of the grid.
    pub fn value_at(&self, t: f64) -> f64 {
        self.values[self.index_at(t)]
    }

    /// Rebuild the path from `x0`, the continuous steps and the applied jumps.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.values.len());
        out.push(self.values[0]);
        let mut jumps = self.jumps.iter().peekable();
        for (i, step) in self.steps.iter().enumerate() {
            let mut x = out[i] + step;
            if let Some(j) = jumps.next_if(|j| j.index == i + 1) {
                x += j.size;
            }
            out.push(x);
        }
        out
    }

    pub fn check_horizon(&self, t: f64) -> Result<()> {
        if !(t >= 0.0 && t <= self.horizon()) {
            return Err(Error::Input(format!("time {t} is outside [0, {}]", self.horizon())));
        }
        Ok(())
    }

    /// CSV with columns `time,left,value,mark`; the mark is empty off jumps.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time,left,value,mark")?;
        let mut jumps = self.jumps.iter().peekable();
        for i in 0..self.times.len() {
            let mark = jumps.next_if(|j| j.index == i).map(|j| j.mark.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{}", self.times[i], self.left[i], self.values[i], mark)?;
        }
        Ok(())
    }
}
