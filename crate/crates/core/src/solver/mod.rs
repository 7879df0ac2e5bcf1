//! Jump-adapted Euler scheme and the path statistics built on it.

mod path;

pub use path::{AppliedJump, PathSolution, Scheme};

use crate::coefficients::{CoefficientTriple, Dynamics, MollifiedTriple, DEFAULT_ORDER};
use crate::error::{Error, Result};
use crate::noise::NoisePath;
use crate::stats::mean_stderr;

pub const DIVERGENCE_BOUND: f64 = 1e12;

/// Left-point Euler recursion on the noise grid. At a jump time the continuous
/// step is taken first and `g` is applied to the resulting left limit. A
/// candidate jump is applied iff its auxiliary is at most 1, so noise sampled
/// with a larger auxiliary budget is thinned back to intensity `mu`.
pub fn euler_solve<D: Dynamics + ?Sized>(dynamics: &D, noise: &NoisePath, x0: f64) -> Result<PathSolution> {
    solve_thinned(dynamics, noise, x0, |_, _| 1.0)
}

/// Euler recursion where the candidate at `(s, u, a)` is accepted iff
/// `a <= accept(s, X_{s-})`.
pub(crate) fn solve_thinned<D, A>(dynamics: &D, noise: &NoisePath, x0: f64, mut accept: A) -> Result<PathSolution>
where
    D: Dynamics + ?Sized,
    A: FnMut(f64, f64) -> f64,
{
    if !x0.is_finite() {
        return Err(Error::Input(format!("initial value must be finite, got {x0}")));
    }
    let cells = noise.cells();
    let mut values = Vec::with_capacity(cells + 1);
    let mut left = Vec::with_capacity(cells + 1);
    let mut steps = Vec::with_capacity(cells);
    let mut jumps = Vec::new();
    values.push(x0);
    left.push(x0);
    let mut next_jump = 0usize;
    let mut x = x0;
    let mut step_max = 0.0f64;
    for i in 0..cells {
        let dt = noise.grid[i + 1] - noise.grid[i];
        step_max = step_max.max(dt);
        let step = dynamics.drift(x) * dt + dynamics.diffusion(x) * noise.increment(i);
        let xl = x + step;
        x = xl;
        while next_jump < noise.jumps.len() && noise.jump_index[next_jump] == i + 1 {
            let jump = noise.jumps[next_jump];
            if jump.aux <= accept(jump.time, xl) {
                let size = dynamics.jump(xl, jump.mark);
                x = xl + size;
                jumps.push(AppliedJump { index: i + 1, time: jump.time, left: xl, mark: jump.mark, size });
            }
            next_jump += 1;
        }
        if !x.is_finite() || x.abs() > DIVERGENCE_BOUND {
            return Err(Error::Diverged { time: noise.grid[i + 1], value: x });
        }
        steps.push(step);
        left.push(xl);
        values.push(x);
    }
    Ok(PathSolution {
        times: noise.grid.clone(),
        values,
        left,
        steps,
        jumps,
        scheme: Scheme {
            step: step_max,
            level: dynamics.level(),
            coefficients: dynamics.fingerprint(),
            seed: noise.seed,
        },
    })
}

/// Euler scheme for the mollified triple `(b_n, sigma_n, g_n)`.
pub fn mollified_solve(triple: &CoefficientTriple, n: u32, noise: &NoisePath, x0: f64) -> Result<PathSolution> {
    let m = MollifiedTriple::new(triple, n, DEFAULT_ORDER)?;
    euler_solve(&m, noise, x0)
}

/// `sup_{s<t} |X_s|^2` over the grid: values at `t_i < t` and left limits at
/// `t_i <= t`.
pub fn running_sup_sq(path: &PathSolution, t: f64) -> Result<f64> {
    path.check_horizon(t)?;
    let mut m = path.values[0].abs();
    for i in 1..path.times.len() {
        if path.times[i] > t {
            break;
        }
        m = m.max(path.left[i].abs());
        if path.times[i] < t {
            m = m.max(path.values[i].abs());
        }
    }
    Ok(m * m)
}

/// Monte Carlo estimate of `E sup_{s<t}|X_s|^2` with its standard error.
pub fn moment_stat(paths: &[PathSolution], t: f64) -> Result<(f64, f64)> {
    if paths.is_empty() {
        return Err(Error::Input("moment statistic of an empty batch".into()));
    }
    let sups = paths.iter().map(|p| running_sup_sq(p, t)).collect::<Result<Vec<_>>>()?;
    Ok(mean_stderr(&sups))
}

/// Upper bound `5E|X0|^2 + 5Kt^2 + 20Kt + 5K^2t^2` on the second moment of the
/// running maximum.
pub fn moment_bound(x0_second_moment: f64, k: f64, t: f64) -> f64 {
    5.0 * x0_second_moment + 5.0 * k * t * t + 20.0 * k * t + 5.0 * k * k * t * t
}

/// Time spent within `eps` of `c`, by the left-endpoint rule.
pub fn level_occupation(path: &PathSolution, c: f64, eps: f64) -> f64 {
    path.times
        .windows(2)
        .zip(&path.values)
        .filter(|(_, x)| (**x - c).abs() < eps)
        .map(|(w, _)| w[1] - w[0])
        .sum()
}

/// `sup |X - Y|` over the points of `coarse`, reading `fine` at every
/// `factor`-th grid point. Both left limits and values are compared.
pub fn sup_distance(coarse: &PathSolution, fine: &PathSolution, factor: usize) -> Result<f64> {
    if (coarse.times.len() - 1) * factor + 1 != fine.times.len() {
        return Err(Error::Input(format!(
            "grids of {} and {} points are not related by factor {factor}",
            coarse.times.len(),
            fine.times.len()
        )));
    }
    let mut d = 0.0f64;
    for i in 0..coarse.times.len() {
        let j = i * factor;
        d = d.max((coarse.values[i] - fine.values[j]).abs());
        d = d.max((coarse.left[i] - fine.left[j]).abs());
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{IntensityMeasure, JumpKernel, ScalarFn};
    use crate::noise::{sample_noise, sample_noise_with_budget};

    fn brownian_noise(seed: u64, h: f64) -> NoisePath {
        sample_noise(&IntensityMeasure::zero(), 1.0, h, seed).unwrap()
    }

    #[test]
    fn zero_coefficients_hold_still() {
        let t = CoefficientTriple::constant(0.0, 0.0);
        let p = euler_solve(&t, &brownian_noise(1, 0.01), 3.0).unwrap();
        assert!(p.values.iter().all(|&x| x == 3.0));
    }

    #[test]
    fn constant_drift_is_exact() {
        let t = CoefficientTriple::constant(0.5, 0.0);
        let p = euler_solve(&t, &brownian_noise(1, 0.125), 1.0).unwrap();
        assert_eq!(p.terminal(), 1.5);
    }

    #[test]
    fn compound_poisson_mean() {
        let t = CoefficientTriple::constant(0.0, 0.0).with_jump(JumpKernel::additive());
        let m = IntensityMeasure::atom(-1.0, 2.0);
        let xs: Vec<f64> = (0..100_000u64)
            .map(|s| euler_solve(&t, &sample_noise(&m, 1.0, 1.0, s).unwrap(), 0.0).unwrap().terminal())
            .collect();
        let (mean, se) = mean_stderr(&xs);
        assert!((mean + 2.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn jumps_reconstruct_exactly() {
        let t = CoefficientTriple::new(ScalarFn::step(0.0, 2.0, 1.0), ScalarFn::step(0.5, 2.0, 1.0), JumpKernel::additive());
        let m = IntensityMeasure::exponential_claims(5.0, 0.4);
        let n = sample_noise(&m, 1.0, 0.01, 9).unwrap();
        let p = euler_solve(&t, &n, 0.2).unwrap();
        assert!(!p.jumps.is_empty());
        assert_eq!(p.reconstruct(), p.values);
        for j in &p.jumps {
            assert_eq!(p.left[j.index], j.left);
            assert_eq!(p.values[j.index], j.left + j.mark);
        }
        assert_eq!(euler_solve(&t, &n, 0.2).unwrap(), p);
    }

    #[test]
    fn aux_budget_thins_back_to_mu() {
        let t = CoefficientTriple::constant(0.0, 0.0).with_jump(JumpKernel::additive());
        let m = IntensityMeasure::atom(-1.0, 1.0);
        let counts: Vec<f64> = (0..20_000u64)
            .map(|s| {
                let n = sample_noise_with_budget(&m, 1.0, 1.0, s, 4.0).unwrap();
                euler_solve(&t, &n, 0.0).unwrap().jumps.len() as f64
            })
            .collect();
        let (mean, se) = mean_stderr(&counts);
        assert!((mean - 1.0).abs() < 3.0 * se);
    }

    #[test]
    fn divergence_is_reported() {
        let t = CoefficientTriple::new(ScalarFn::new("x^3", |x| x * x * x), ScalarFn::constant(0.0), JumpKernel::zero());
        match euler_solve(&t, &brownian_noise(0, 0.1), 10.0) {
            Err(Error::Diverged { time, .. }) => assert!(time > 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mollifying_constants_changes_nothing() {
        let t = CoefficientTriple::constant(0.0, 1.0);
        let n = brownian_noise(4, 0.01);
        let raw = euler_solve(&t, &n, 0.0).unwrap();
        for level in [1, 4, 64] {
            let m = mollified_solve(&t, level, &n, 0.0).unwrap();
            let d = sup_distance(&raw, &m, 1).unwrap();
            assert!(d < 1e-6, "level {level}: {d}");
            assert_eq!(m.scheme.level, Some(level));
        }
    }

    #[test]
    fn moment_stat_of_constant_path() {
        let t = CoefficientTriple::constant(0.0, 0.0);
        let paths: Vec<_> = (0..5).map(|s| euler_solve(&t, &brownian_noise(s, 0.1), 3.0).unwrap()).collect();
        assert_eq!(moment_stat(&paths, 1.0).unwrap(), (9.0, 0.0));
        assert!(moment_stat(&[], 1.0).is_err());
        assert!(moment_stat(&paths, 2.0).is_err());
    }

    #[test]
    fn brownian_running_max_below_bound_and_near_fine_oracle() {
        let t = CoefficientTriple::constant(0.0, 1.0);
        let coarse: Vec<f64> = (0..4000u64)
            .map(|s| running_sup_sq(&euler_solve(&t, &brownian_noise(s, 1e-3), 0.0).unwrap(), 1.0).unwrap())
            .collect();
        let (est, se) = mean_stderr(&coarse);
        assert!(est + 3.0 * se < moment_bound(0.0, 1.0, 1.0));
        // independent high-resolution sample of sup B^2 by direct summation
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xB00);
        let fine: Vec<f64> = (0..4000)
            .map(|_| {
                let (mut b, mut m) = (0.0f64, 0.0f64);
                for _ in 0..10_000 {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    b += z * 1e-2;
                    m = m.max(b.abs());
                }
                m * m
            })
            .collect();
        let (oracle, ose) = mean_stderr(&fine);
        // discrete monitoring biases the coarse grid low by O(sqrt h)
        let bias = 0.5826 * 2.0 * (1e-3f64.sqrt() - 1e-4f64.sqrt()) * 1.6;
        assert!((est - oracle).abs() < 3.0 * (se * se + ose * ose).sqrt() + bias, "{est} vs {oracle}");
    }

    #[test]
    fn occupation_edge_cases() {
        let still = euler_solve(&CoefficientTriple::constant(0.0, 0.0), &brownian_noise(0, 0.01), 2.0).unwrap();
        assert!((level_occupation(&still, 2.0, 0.1) - 1.0).abs() < 1e-12);
        let drift = euler_solve(&CoefficientTriple::constant(1.0, 0.0), &brownian_noise(0, 0.01), 0.0).unwrap();
        assert_eq!(level_occupation(&drift, 10.0, 0.1), 0.0);
    }

    #[test]
    fn brownian_occupation_scales_with_eps() {
        let t = CoefficientTriple::constant(0.0, 1.0);
        let paths: Vec<_> = (0..1000u64).map(|s| euler_solve(&t, &brownian_noise(s, 1e-3), 0.0).unwrap()).collect();
        let mean = |eps: f64| paths.iter().map(|p| level_occupation(p, 0.0, eps)).sum::<f64>() / paths.len() as f64;
        let (a, b, c) = (mean(0.05), mean(0.1), mean(0.2));
        assert!((b / a - 2.0).abs() < 0.5 && (c / b - 2.0).abs() < 0.5, "{a} {b} {c}");
    }

    #[test]
    fn csv_has_one_row_per_point() {
        let t = CoefficientTriple::constant(0.0, 0.0);
        let p = euler_solve(&t, &brownian_noise(0, 0.25), 1.0).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("time,left,value,mark\n0,1,1,\n"));
    }
}
