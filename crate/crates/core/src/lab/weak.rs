use std::sync::Arc;

use crate::batch::{map_seeds, seed_block};
use crate::coefficients::{CoefficientTriple, Dynamics, IntensityMeasure};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::noise::{sample_noise, sample_noise_with_budget};
use crate::solver::euler_solve;
use crate::stats::ks_two_sample;
use crate::timechange::{invert_timechanged, solve_timechanged, thinning_budget};

use super::{certification_grid, dynamics_for, ExperimentReport, ExperimentVerdict, ExperimentWitness, Table};

pub const MIN_PATHS: usize = 100;

/// A pipeline producing one path per seed, read at the requested times.
pub trait MarginalSampler: Sync {
    fn name(&self) -> String;
    fn marginals(&self, seed: u64, times: &[f64]) -> Result<Vec<f64>>;
}

/// Direct Euler scheme of the equation.
pub struct DirectEuler {
    pub dynamics: Arc<dyn Dynamics>,
    pub measure: IntensityMeasure,
    pub x0: f64,
    pub h: f64,
    pub horizon: f64,
}

impl DirectEuler {
    pub fn new(model: &Model, h: f64, horizon: f64, level: Option<u32>) -> Result<Self> {
        Ok(Self {
            dynamics: dynamics_for(&model.triple, level)?,
            measure: model.measure.clone(),
            x0: model.x0,
            h,
            horizon,
        })
    }
}

impl MarginalSampler for DirectEuler {
    fn name(&self) -> String {
        format!("euler(h={}, x0={})", self.h, self.x0)
    }

    fn marginals(&self, seed: u64, times: &[f64]) -> Result<Vec<f64>> {
        let noise = sample_noise(&self.measure, self.horizon, self.h, seed)?;
        let path = euler_solve(self.dynamics.as_ref(), &noise, self.x0)?;
        times.iter().map(|&t| path.check_horizon(t).map(|_| path.value_at(t))).collect()
    }
}

/// Solve the time-changed equation by thinning, then map back to the
/// original clock.
pub struct TimeChangedEuler {
    pub triple: CoefficientTriple,
    pub measure: IntensityMeasure,
    pub x0: f64,
    pub h: f64,
    pub horizon: f64,
    /// Horizon in the changed clock, `sup sigma^2` times the original horizon.
    pub tau_horizon: f64,
    budget: f64,
}

impl TimeChangedEuler {
    pub fn new(model: &Model, h: f64, horizon: f64) -> Result<Self> {
        let budget = thinning_budget(&model.triple)?;
        let sup = certification_grid(&model.triple, model.x0)
            .iter()
            .map(|&x| model.triple.diffusion.eval(x).abs())
            .fold(0.0, f64::max);
        Ok(Self {
            triple: model.triple.clone(),
            measure: model.measure.clone(),
            x0: model.x0,
            h,
            horizon,
            tau_horizon: sup * sup * horizon,
            budget,
        })
    }
}

impl MarginalSampler for TimeChangedEuler {
    fn name(&self) -> String {
        format!("timechanged(h={}, x0={})", self.h, self.x0)
    }

    fn marginals(&self, seed: u64, times: &[f64]) -> Result<Vec<f64>> {
        let noise = sample_noise_with_budget(&self.measure, self.tau_horizon, self.h, seed, self.budget)?;
        let tilde = solve_timechanged(&self.triple, &self.measure, &noise, self.x0)?;
        let path = invert_timechanged(&tilde, &self.triple)?;
        times
            .iter()
            .map(|&t| {
                if t > path.horizon() {
                    Err(Error::Input(format!(
                        "seed {seed}: changed clock covers only [0, {}], need {t}",
                        path.horizon()
                    )))
                } else {
                    Ok(path.value_at(t))
                }
            })
            .collect()
    }
}

/// Two-sample KS comparison of the marginals of two pipelines at each time in
/// `times`, with Bonferroni-corrected level `alpha`. Seed blocks
/// `[base_a, base_a + n)` and `[base_b, base_b + n)` must be disjoint.
pub fn weak_experiment(
    a: &dyn MarginalSampler,
    b: &dyn MarginalSampler,
    times: &[f64],
    n_paths: usize,
    base_a: u64,
    base_b: u64,
    alpha: f64,
) -> Result<ExperimentReport> {
    if n_paths < MIN_PATHS {
        return Err(Error::Underpowered { n: n_paths, min: MIN_PATHS });
    }
    if times.is_empty() {
        return Err(Error::Input("no comparison times".into()));
    }
    let n = n_paths as u64;
    if base_a < base_b.saturating_add(n) && base_b < base_a.saturating_add(n) {
        return Err(Error::Input("seed blocks overlap".into()));
    }
    let seeds_a = seed_block(base_a, n_paths);
    let seeds_b = seed_block(base_b, n_paths);
    let xa = map_seeds(&seeds_a, |s| a.marginals(s, times))?;
    let xb = map_seeds(&seeds_b, |s| b.marginals(s, times))?;

    let mut report = ExperimentReport::new("weak", base_a);
    report.notes.push(format!("A = {}, B = {}", a.name(), b.name()));
    let corrected = alpha / times.len() as f64;
    report.summary.insert("alpha".into(), alpha);
    report.summary.insert("corrected_alpha".into(), corrected);
    let mut worst: Option<(f64, f64)> = None;
    for (k, &t) in times.iter().enumerate() {
        let ca: Vec<f64> = xa.iter().map(|r| r[k]).collect();
        let cb: Vec<f64> = xb.iter().map(|r| r[k]).collect();
        let ks = ks_two_sample(&ca, &cb);
        report.summary.insert(format!("ks_statistic@t={t}"), ks.statistic);
        report.summary.insert(format!("p_value@t={t}"), ks.p_value);
        if worst.is_none_or(|(_, p)| ks.p_value < p) {
            worst = Some((t, ks.p_value));
        }
    }
    let mut columns: Vec<String> = times.iter().map(|t| format!("a@t={t}")).collect();
    columns.extend(times.iter().map(|t| format!("b@t={t}")));
    report.per_seed = Table::new(columns);
    for (i, s) in seeds_a.iter().enumerate() {
        let mut row = xa[i].clone();
        row.extend(&xb[i]);
        report.per_seed.push(*s, row);
    }
    let (t, p) = worst.unwrap();
    report.verdict = if p > corrected {
        ExperimentVerdict::Consistent
    } else {
        report.witness = Some(ExperimentWitness {
            statistic: format!("ks p-value at t = {t}"),
            value: p,
            threshold: corrected,
            seed: None,
        });
        ExperimentVerdict::Violated
    };
    Ok(report)
}
