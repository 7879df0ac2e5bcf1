//! Uniqueness experiments: shared-noise pathwise comparisons, distributional
//! comparisons, and the maximum of two solutions.

mod maximum;
mod report;
mod weak;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use maximum::{
    jump_cancellation_violations, maximum_experiment, shared_noise_pair, JumpViolation, MaximumConfig, PairOutcome,
};
pub use report::{ExperimentReport, ExperimentVerdict, ExperimentWitness, LevelStat, Table, VERSION};
pub use weak::{weak_experiment, DirectEuler, MarginalSampler, TimeChangedEuler};

use crate::batch::map_seeds;
use crate::coefficients::{
    check_condition, check_grid, check_modulus, CoefficientTriple, ConditionId, ConditionReport, Dynamics,
    IntensityMeasure, ModulusCheck, ModulusSpec, MollifiedTriple, Verdict, DEFAULT_ORDER,
};
use crate::error::{Error, Result};
use crate::noise::{derive_seed, sample_noise, NoisePath};
use crate::solver::{euler_solve, sup_distance};
use crate::stats::{mean_stderr, median, ols_slope};

/// Step size and mollification level (`None` for raw coefficients).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub h: f64,
    #[serde(default)]
    pub level: Option<u32>,
}

impl Resolution {
    pub fn raw(h: f64) -> Self {
        Self { h, level: None }
    }

    /// Mollification level tied to the step, `n = 1/h`.
    pub fn tied(h: f64) -> Self {
        Self { h, level: Some((1.0 / h).round().max(1.0) as u32) }
    }
}

pub(crate) fn dynamics_for(triple: &CoefficientTriple, level: Option<u32>) -> Result<Arc<dyn Dynamics>> {
    Ok(match level {
        None => Arc::new(triple.clone()),
        Some(n) => Arc::new(MollifiedTriple::new(triple, n, DEFAULT_ORDER)?),
    })
}

pub(crate) fn level_stat(statistic: &str, h: f64, level: Option<u32>, xs: &[f64]) -> LevelStat {
    let (mean, stderr) = mean_stderr(xs);
    LevelStat { statistic: statistic.to_string(), h, level, median: median(xs), mean, stderr, count: xs.len() }
}

pub(crate) fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

/// The check grid used to certify hypotheses: `[x0 - 5, x0 + 5]` widened to
/// cover every declared discontinuity.
pub fn certification_grid(triple: &CoefficientTriple, x0: f64) -> Vec<f64> {
    let mut lo = x0 - 5.0;
    let mut hi = x0 + 5.0;
    for &d in &triple.discontinuities {
        lo = lo.min(d - 5.0);
        hi = hi.max(d + 5.0);
    }
    check_grid(triple, lo, hi, 401)
}

/// Conditions 4a, 4b and the modulus condition (mod_f when the triple
/// carries an `f`, otherwise mod_rho with `rho(a) = a`).
pub fn certify_uniqueness(triple: &CoefficientTriple, measure: &IntensityMeasure, x0: f64) -> Result<Vec<ConditionReport>> {
    let grid = certification_grid(triple, x0);
    let mut out = vec![
        check_condition(triple, measure, ConditionId::MonotoneJumps, &grid)?,
        check_condition(triple, measure, ConditionId::DiffusionElliptic, &grid)?,
    ];
    let check = match &triple.modulus {
        Some(f) => ModulusCheck::Monotone(f.clone()),
        None => ModulusCheck::Rho(ModulusSpec::linear(1.0)),
    };
    out.push(check_modulus(triple, &check, &grid)?);
    Ok(out)
}

fn refinement_factors(resolutions: &[Resolution]) -> Result<Vec<usize>> {
    resolutions
        .windows(2)
        .map(|w| {
            let ratio = w[0].h / w[1].h;
            let r = ratio.round();
            if r < 1.0 || (ratio - r).abs() > 1e-6 * ratio {
                Err(Error::Input(format!("step {} does not refine {} by an integer factor", w[1].h, w[0].h)))
            } else {
                Ok(r as usize)
            }
        })
        .collect()
}

/// Noise at every resolution, each level a bridge refinement of the previous.
pub fn noise_ladder(
    measure: &IntensityMeasure,
    horizon: f64,
    resolutions: &[Resolution],
    seed: u64,
) -> Result<Vec<NoisePath>> {
    let factors = refinement_factors(resolutions)?;
    let mut out = vec![sample_noise(measure, horizon, resolutions[0].h, seed)?];
    for (k, &f) in factors.iter().enumerate() {
        let next = if f == 1 { out[k].clone() } else { out[k].refine(f as u32, derive_seed(seed, k as u64 + 1))? };
        out.push(next);
    }
    Ok(out)
}

/// Solve at every resolution on shared refined noise and compare consecutive
/// levels on the coarser grid.
pub fn pathwise_experiment(
    triple: &CoefficientTriple,
    measure: &IntensityMeasure,
    x0: f64,
    horizon: f64,
    resolutions: &[Resolution],
    seeds: &[u64],
) -> Result<ExperimentReport> {
    if resolutions.len() < 2 {
        return Err(Error::Input("pathwise experiment needs at least two resolutions".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Input("no seeds".into()));
    }
    let factors = refinement_factors(resolutions)?;
    let dynamics = resolutions.iter().map(|r| dynamics_for(triple, r.level)).collect::<Result<Vec<_>>>()?;
    let rows = map_seeds(seeds, |seed| {
        let noises = noise_ladder(measure, horizon, resolutions, seed)?;
        let paths = noises
            .iter()
            .zip(&dynamics)
            .map(|(n, d)| euler_solve(d.as_ref(), n, x0))
            .collect::<Result<Vec<_>>>()?;
        (0..factors.len()).map(|k| sup_distance(&paths[k], &paths[k + 1], factors[k])).collect()
    })?;

    let mut report = ExperimentReport::new("pathwise", seeds[0]);
    report.conditions = certify_uniqueness(triple, measure, x0)?;
    if report.conditions.iter().any(|c| c.verdict != Verdict::Pass) {
        report.notes.push("pathwise uniqueness hypotheses not certified on the check grid".into());
    }
    let columns = (0..factors.len()).map(|k| format!("sup_distance_h{}", resolutions[k].h)).collect();
    report.per_seed = Table::new(columns);
    for (&s, row) in seeds.iter().zip(rows) {
        report.per_seed.push(s, row);
    }
    let mut medians = Vec::new();
    for k in 0..factors.len() {
        let col = report.per_seed.column(k);
        let stat = level_stat("sup_distance", resolutions[k].h, resolutions[k].level, &col);
        medians.push(stat.median);
        report.levels.push(stat);
    }
    let hs: Vec<f64> = resolutions[..factors.len()].iter().map(|r| r.h.ln()).collect();
    let logs: Vec<f64> = medians.iter().map(|m| m.ln()).collect();
    let order = if medians.iter().all(|&m| m > 0.0) && hs.len() >= 2 { ols_slope(&hs, &logs) } else { f64::NAN };
    let k = if triple.bound_k > 0.0 { triple.bound_k } else { 1.0 };
    let final_h = resolutions[factors.len() - 1].h;
    let threshold = 10.0 * final_h.sqrt() * k;
    let final_median = *medians.last().unwrap();
    report.summary.insert("observed_order".into(), order);
    report.summary.insert("final_median".into(), final_median);
    report.summary.insert("threshold".into(), threshold);

    report.verdict = if final_median >= threshold {
        let last = report.per_seed.column(factors.len() - 1);
        let (i, &v) = last.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        report.witness = Some(ExperimentWitness {
            statistic: format!("median sup_distance at h = {final_h}"),
            value: final_median,
            threshold,
            seed: Some(seeds[i]),
        });
        report.notes.push(format!("largest final distance {v}"));
        ExperimentVerdict::Violated
    } else if strictly_decreasing(&medians) {
        ExperimentVerdict::Consistent
    } else {
        report.notes.push("median distance is not decreasing under refinement".into());
        ExperimentVerdict::Inconclusive
    };
    Ok(report)
}
