use serde::Serialize;

use crate::batch::map_seeds;
use crate::coefficients::{check_condition, CoefficientTriple, ConditionId, Dynamics, IntensityMeasure, Verdict};
use crate::error::{Error, Result};
use crate::localtime::{default_bandwidth, lt_condition_stat, sigma_along, LtStat};
use crate::noise::{sample_noise, NoisePath};
use crate::solver::{euler_solve, PathSolution};

use super::{certification_grid, dynamics_for, level_stat, ExperimentReport, ExperimentVerdict, ExperimentWitness, Table};

/// A jump at which the larger pre-jump state ended strictly below the other.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct JumpViolation {
    pub index: usize,
    pub time: f64,
    pub left1: f64,
    pub left2: f64,
    pub value1: f64,
    pub value2: f64,
}

/// Check `X1_{s-} > X2_{s-} => X1_s >= X2_s` and the same with the labels
/// swapped at every jump of either path.
pub fn jump_cancellation_violations(p1: &PathSolution, p2: &PathSolution) -> Result<Vec<JumpViolation>> {
    if p1.times != p2.times {
        return Err(Error::Input("paths do not share a grid".into()));
    }
    let mut idx: Vec<usize> = p1.jumps.iter().chain(&p2.jumps).map(|j| j.index).collect();
    idx.sort_unstable();
    idx.dedup();
    Ok(idx
        .into_iter()
        .filter_map(|i| {
            let (l1, l2, v1, v2) = (p1.left[i], p2.left[i], p1.values[i], p2.values[i]);
            ((l1 > l2 && v1 < v2) || (l2 > l1 && v2 < v1)).then_some(JumpViolation {
                index: i,
                time: p1.times[i],
                left1: l1,
                left2: l2,
                value1: v1,
                value2: v2,
            })
        })
        .collect())
}

/// Steps and mollification level pairs for the maximum experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaximumConfig {
    pub horizon: f64,
    pub steps: Vec<f64>,
    /// `(n1, n2)` per step.
    pub levels: Vec<(u32, u32)>,
    /// Local-time bandwidth and ladder spacing as a multiple of `sqrt h`.
    pub bandwidth_scale: f64,
}

impl MaximumConfig {
    /// Levels `n = 1/h` and `4n`.
    pub fn tied(horizon: f64, steps: Vec<f64>) -> Self {
        let levels = steps
            .iter()
            .map(|h| {
                let n = (1.0 / h).round().max(1.0) as u32;
                (n, 4 * n)
            })
            .collect();
        Self { horizon, steps, levels, bandwidth_scale: 1.0 }
    }
}

/// Two solutions on one noise path.
pub struct PairOutcome {
    pub noise: NoisePath,
    pub first: PathSolution,
    pub second: PathSolution,
}

pub fn shared_noise_pair(
    triple: &CoefficientTriple,
    measure: &IntensityMeasure,
    x0: f64,
    horizon: f64,
    h: f64,
    levels: (u32, u32),
    seed: u64,
) -> Result<PairOutcome> {
    let d1 = dynamics_for(triple, Some(levels.0))?;
    let d2 = dynamics_for(triple, Some(levels.1))?;
    let noise = sample_noise(measure, horizon, h, seed)?;
    Ok(PairOutcome {
        first: euler_solve(d1.as_ref(), &noise, x0)?,
        second: euler_solve(d2.as_ref(), &noise, x0)?,
        noise,
    })
}

/// One-step Euler residuals of `M = X1 v X2` against the raw coefficients:
/// returns `(sup |r|, sqrt(sum r^2))`.
fn maximum_residual(triple: &CoefficientTriple, noise: &NoisePath, p1: &PathSolution, p2: &PathSolution) -> (f64, f64) {
    let m: Vec<f64> = p1.values.iter().zip(&p2.values).map(|(a, b)| a.max(*b)).collect();
    let ml: Vec<f64> = p1.left.iter().zip(&p2.left).map(|(a, b)| a.max(*b)).collect();
    let mut marks = vec![None; noise.grid.len()];
    for (j, &ix) in noise.jumps.iter().zip(&noise.jump_index) {
        if j.aux <= 1.0 {
            marks[ix] = Some(j.mark);
        }
    }
    let (mut sup, mut sq) = (0.0f64, 0.0);
    for i in 0..noise.cells() {
        let dt = noise.grid[i + 1] - noise.grid[i];
        let x = m[i];
        let mut r = ml[i + 1] - x - triple.drift(x) * dt - triple.diffusion(x) * noise.increment(i);
        let jump = marks[i + 1].map_or(0.0, |u| triple.jump(ml[i + 1], u));
        r += m[i + 1] - ml[i + 1] - jump;
        sup = sup.max(r.abs());
        sq += r * r;
    }
    (sup, sq.sqrt())
}

const COLUMNS: [&str; 10] = [
    "lt_tanaka",
    "lt_occupation",
    "residual_sup",
    "residual_l2",
    "jump_violations",
    "lt_raw_at_-2eps",
    "lt_raw_at_-eps",
    "lt_raw_at_0",
    "lt_raw_at_eps",
    "lt_raw_at_2eps",
];

fn shrinks(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0]) && (xs.last() < xs.first() || xs.iter().all(|&x| x == 0.0))
}

/// For each step, build `X1` and `X2` at two mollification levels on shared
/// noise and record the local-time statistic of `X1 - X2`, the Euler residual
/// of `X1 v X2`, and jump-cancellation violations. Requires condition 4a.
pub fn maximum_experiment(
    triple: &CoefficientTriple,
    measure: &IntensityMeasure,
    x0: f64,
    config: &MaximumConfig,
    seeds: &[u64],
) -> Result<ExperimentReport> {
    if config.steps.is_empty() || config.steps.len() != config.levels.len() {
        return Err(Error::Input("one level pair per step is required".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Input("no seeds".into()));
    }
    if !(config.bandwidth_scale > 0.0) {
        return Err(Error::Input("bandwidth scale must be positive".into()));
    }
    let grid = certification_grid(triple, x0);
    let monotone = check_condition(triple, measure, ConditionId::MonotoneJumps, &grid)?;
    if monotone.verdict != Verdict::Pass {
        return Err(Error::Precondition("condition 4a is not certified on the check grid".into()));
    }

    let mut report = ExperimentReport::new("maximum", seeds[0]);
    report.conditions.push(monotone);
    let mut columns = Vec::new();
    for h in &config.steps {
        columns.extend(COLUMNS.iter().map(|c| format!("{c}_h{h}")));
    }
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); seeds.len()];
    let mut first_violation: Option<(u64, JumpViolation)> = None;
    let mut total_violations = 0usize;
    let (mut lt_medians, mut res_medians) = (Vec::new(), Vec::new());
    for (&h, &levels) in config.steps.iter().zip(&config.levels) {
        let eps = config.bandwidth_scale * default_bandwidth(h, 0.0);
        let d1 = dynamics_for(triple, Some(levels.0))?;
        let d2 = dynamics_for(triple, Some(levels.1))?;
        let per_seed = map_seeds(seeds, |seed| {
            let noise = sample_noise(measure, config.horizon, h, seed)?;
            let p1 = euler_solve(d1.as_ref(), &noise, x0)?;
            let p2 = euler_solve(d2.as_ref(), &noise, x0)?;
            let violations = jump_cancellation_violations(&p1, &p2)?;
            let s1 = sigma_along(&p1, d1.as_ref());
            let s2 = sigma_along(&p2, d2.as_ref());
            let lt = lt_condition_stat(&p1, &p2, &s1, &s2, config.horizon, eps)?;
            let (sup, l2) = maximum_residual(triple, &noise, &p1, &p2);
            Ok((violations, lt, sup, l2))
        })?;
        for (k, (&seed, (violations, lt, sup, l2))) in seeds.iter().zip(per_seed).enumerate() {
            total_violations += violations.len();
            if first_violation.is_none() {
                first_violation = violations.first().map(|v| (seed, *v));
            }
            let LtStat { tanaka, occupation, ladder } = lt;
            rows[k].extend([tanaka.value, occupation.value, sup, l2, violations.len() as f64]);
            rows[k].extend(ladder.iter().map(|e| e.raw));
        }
        let base = rows[0].len() - COLUMNS.len();
        let col = |c: usize| rows.iter().map(|r| r[base + c]).collect::<Vec<f64>>();
        for (c, name) in COLUMNS.iter().enumerate() {
            report.levels.push(level_stat(name, h, Some(levels.0), &col(c)));
        }
        lt_medians.push(crate::stats::median(&col(0)));
        res_medians.push(crate::stats::median(&col(3)));
        report.summary.insert(format!("eps_h{h}"), eps);
    }
    report.per_seed = Table::new(columns);
    for (&s, row) in seeds.iter().zip(rows) {
        report.per_seed.push(s, row);
    }
    report.summary.insert("jump_violations".into(), total_violations as f64);

    report.verdict = if let Some((seed, v)) = first_violation {
        report.witness = Some(ExperimentWitness {
            statistic: format!("jump cancellation at t = {}", v.time),
            value: total_violations as f64,
            threshold: 0.0,
            seed: Some(seed),
        });
        ExperimentVerdict::Violated
    } else if shrinks(&lt_medians) && shrinks(&res_medians) {
        ExperimentVerdict::Consistent
    } else {
        report.notes.push("local-time and residual medians do not both shrink under refinement".into());
        ExperimentVerdict::Inconclusive
    };
    Ok(report)
}
