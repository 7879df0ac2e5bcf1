//! The random time change `tau_t = int_0^t sigma(X_s)^2 ds`, the time-changed
//! process, and a direct solver for the time-changed equation by thinning.

use serde::Serialize;

use crate::coefficients::{CoefficientTriple, Dynamics, IntensityMeasure};
use crate::error::{Error, Result};
use crate::noise::NoisePath;
use crate::solver::{solve_thinned, AppliedJump, PathSolution};
use crate::stats::{ks_two_sample, mean_stderr, normal_quantile, KsOutcome};

/// `tau` at the grid points of a path (left-point rule).
#[derive(Clone, Debug, PartialEq)]
pub struct TimeChange {
    pub times: Vec<f64>,
    pub tau: Vec<f64>,
}

pub fn compute_tau<D: Dynamics + ?Sized>(path: &PathSolution, dynamics: &D) -> Result<TimeChange> {
    let mut tau = Vec::with_capacity(path.times.len());
    tau.push(0.0);
    for i in 0..path.times.len() - 1 {
        let x = path.values[i];
        let s = dynamics.diffusion(x);
        if s == 0.0 || !s.is_finite() {
            return Err(Error::Degenerate { time: path.times[i], state: x });
        }
        tau.push(tau[i] + s * s * (path.times[i + 1] - path.times[i]));
    }
    Ok(TimeChange { times: path.times.clone(), tau })
}

/// Piecewise-linear inverse of increasing knots `ys` over `xs`, clamped at
/// both ends.
fn invert_knots(xs: &[f64], ys: &[f64], y: f64) -> f64 {
    if y <= ys[0] {
        return xs[0];
    }
    let last = ys.len() - 1;
    if y >= ys[last] {
        return xs[last];
    }
    let i = ys.partition_point(|&v| v <= y) - 1;
    let w = (y - ys[i]) / (ys[i + 1] - ys[i]);
    xs[i] + w * (xs[i + 1] - xs[i])
}

impl TimeChange {
    pub fn total(&self) -> f64 {
        *self.tau.last().unwrap()
    }

    /// `tau` at an arbitrary time, linear between grid points.
    pub fn tau_at(&self, t: f64) -> f64 {
        invert_knots(&self.tau, &self.times, t)
    }

    /// `tau^{-1}(s)`, clamped to the path horizon.
    pub fn inverse(&self, s: f64) -> f64 {
        invert_knots(&self.times, &self.tau, s)
    }
}

/// `X~` on the image grid `{tau(t_i)}`; jump times move to `tau(s)` with their
/// marks.
pub fn time_change_path(path: &PathSolution, tc: &TimeChange) -> Result<PathSolution> {
    if tc.times.len() != path.times.len() {
        return Err(Error::Input("time change was computed from a different path".into()));
    }
    Ok(PathSolution {
        times: tc.tau.clone(),
        jumps: path
            .jumps
            .iter()
            .map(|j| AppliedJump { time: tc.tau[j.index], ..*j })
            .collect(),
        ..path.clone()
    })
}

/// A continuous path sampled at increasing times, starting at 0.
#[derive(Clone, Debug, PartialEq)]
pub struct BmPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl BmPath {
    /// Linear interpolation, clamped to the last point.
    pub fn at(&self, t: f64) -> f64 {
        let last = self.times.len() - 1;
        if t >= self.times[last] {
            return self.values[last];
        }
        let i = self.times.partition_point(|&s| s <= t).max(1) - 1;
        let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }

    /// Realized quadratic variation on `[0, t]`; a straddling cell counts
    /// in proportion to its overlap.
    pub fn quadratic_variation(&self, t: f64) -> f64 {
        let mut qv = 0.0;
        for i in 0..self.times.len() - 1 {
            let (a, b) = (self.times[i], self.times[i + 1]);
            if a >= t {
                break;
            }
            let d = self.values[i + 1] - self.values[i];
            let frac = if b <= t { 1.0 } else { (t - a) / (b - a) };
            qv += d * d * frac;
        }
        qv
    }

    pub fn scaled(&self, c: f64) -> BmPath {
        BmPath { times: self.times.clone(), values: self.values.iter().map(|v| c * v).collect() }
    }
}

/// `W = X~ - x0 - int (sigma^{-2} b)(X~) dtau - jumps` on the image grid, built
/// from the recorded Euler steps of the original path.
pub fn driving_martingale<D: Dynamics + ?Sized>(path: &PathSolution, tc: &TimeChange, dynamics: &D) -> BmPath {
    let mut values = Vec::with_capacity(path.times.len());
    values.push(0.0);
    for i in 0..path.steps.len() {
        let dt = path.times[i + 1] - path.times[i];
        let noise_part = path.steps[i] - dynamics.drift(path.values[i]) * dt;
        values.push(values[i] + noise_part);
    }
    BmPath { times: tc.tau.clone(), values }
}

/// The Brownian part of a path in its own clock: `X - x0 - int b - jumps`.
pub fn martingale_part<D: Dynamics + ?Sized>(path: &PathSolution, dynamics: &D) -> BmPath {
    let tc = TimeChange { times: path.times.clone(), tau: path.times.clone() };
    driving_martingale(path, &tc, dynamics)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BmThresholds {
    pub qv_relative_error: f64,
    pub ks_p_value: f64,
}

impl Default for BmThresholds {
    fn default() -> Self {
        Self { qv_relative_error: 0.05, ks_p_value: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BmReport {
    pub t: f64,
    pub paths: usize,
    pub mean_qv: f64,
    pub mean_qv_stderr: f64,
    pub qv_relative_error: f64,
    pub ks: KsOutcome,
    pub lag1_correlation: f64,
    pub thresholds: BmThresholds,
    pub pass: bool,
}

/// Statistical check that a batch of paths behaves like Brownian motion on
/// `[0, t]`: mean realized quadratic variation against `t`, and `W_t / sqrt t`
/// against standard normal quantiles by a two-sample KS test.
pub fn verify_bm(paths: &[BmPath], t: f64, thresholds: BmThresholds) -> Result<BmReport> {
    if paths.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    if !(t > 0.0) {
        return Err(Error::Input(format!("time must be positive, got {t}")));
    }
    let qvs: Vec<f64> = paths.iter().map(|p| p.quadratic_variation(t)).collect();
    let (mean_qv, mean_qv_stderr) = mean_stderr(&qvs);
    let scaled: Vec<f64> = paths.iter().map(|p| p.at(t) / t.sqrt()).collect();
    let n = scaled.len();
    let reference: Vec<f64> = (0..n).map(|i| normal_quantile((i as f64 + 0.5) / n as f64)).collect();
    let ks = ks_two_sample(&scaled, &reference);

    let mut pairs = Vec::new();
    for p in paths {
        let z: Vec<f64> = (0..p.times.len() - 1)
            .filter(|&i| p.times[i + 1] <= t)
            .map(|i| (p.values[i + 1] - p.values[i]) / (p.times[i + 1] - p.times[i]).sqrt())
            .collect();
        pairs.extend(z.windows(2).map(|w| (w[0], w[1])));
    }
    let lag1_correlation = correlation(&pairs);
    let qv_relative_error = (mean_qv / t - 1.0).abs();
    Ok(BmReport {
        t,
        paths: n,
        mean_qv,
        mean_qv_stderr,
        qv_relative_error,
        pass: qv_relative_error < thresholds.qv_relative_error && ks.p_value > thresholds.ks_p_value,
        ks,
        lag1_correlation,
        thresholds,
    })
}

fn correlation(pairs: &[(f64, f64)]) -> f64 {
    if pairs.len() < 2 {
        return f64::NAN;
    }
    let n = pairs.len() as f64;
    let (ma, mb) = pairs.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
    let (ma, mb) = (ma / n, mb / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for &(a, b) in pairs {
        sab += (a - ma) * (b - mb);
        saa += (a - ma) * (a - ma);
        sbb += (b - mb) * (b - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Coefficients of the time-changed equation: unit diffusion, drift
/// `b / sigma^2`, unchanged jump kernel.
struct TimeChanged<'a> {
    triple: &'a CoefficientTriple,
}

impl Dynamics for TimeChanged<'_> {
    fn drift(&self, x: f64) -> f64 {
        let s = self.triple.diffusion.eval(x);
        self.triple.drift.eval(x) / (s * s)
    }
    fn diffusion(&self, _x: f64) -> f64 {
        1.0
    }
    fn jump(&self, x: f64, u: f64) -> f64 {
        self.triple.jump.eval(x, u)
    }
    fn fingerprint(&self) -> String {
        format!("{}@timechanged", self.triple.fingerprint())
    }
}

/// Auxiliary budget `sigma_0^{-2}` the noise must carry for
/// [`solve_timechanged`].
pub fn thinning_budget(triple: &CoefficientTriple) -> Result<f64> {
    if !(triple.sigma_lower > 0.0) {
        return Err(Error::Precondition("time change needs a certified sigma_0 > 0".into()));
    }
    Ok(1.0 / (triple.sigma_lower * triple.sigma_lower))
}

/// Euler scheme for the time-changed equation. The noise must be sampled from
/// `measure` with auxiliary budget at least `sigma_0^{-2}`; a candidate jump is
/// kept iff its auxiliary is at most `sigma(X~_{s-})^{-2}`.
pub fn solve_timechanged(
    triple: &CoefficientTriple,
    measure: &IntensityMeasure,
    noise: &NoisePath,
    x0: f64,
) -> Result<PathSolution> {
    let budget = thinning_budget(triple)?;
    if noise.aux_budget < budget * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!(
            "noise auxiliary budget {} is below sigma_0^-2 = {budget}",
            noise.aux_budget
        )));
    }
    if noise.spec_hash != measure.spec_hash() {
        return Err(Error::Input("noise was sampled from a different measure".into()));
    }
    let dynamics = TimeChanged { triple };
    let sigma0 = triple.sigma_lower;
    let mut degenerate = None;
    let path = solve_thinned(&dynamics, noise, x0, |time, x| {
        let s = triple.diffusion.eval(x).abs();
        if s < sigma0 * (1.0 - 1e-12) && degenerate.is_none() {
            degenerate = Some((time, x));
        }
        1.0 / (s * s)
    })?;
    if let Some((time, state)) = degenerate {
        return Err(Error::Degenerate { time, state });
    }
    Ok(path)
}

/// Map a time-changed path back to the original clock:
/// `tau^{-1}(s) = int_0^s sigma(X~_r)^{-2} dr`.
pub fn invert_timechanged(path: &PathSolution, triple: &CoefficientTriple) -> Result<PathSolution> {
    let mut clock = Vec::with_capacity(path.times.len());
    clock.push(0.0);
    for i in 0..path.times.len() - 1 {
        let s = triple.diffusion.eval(path.values[i]);
        if s == 0.0 || !s.is_finite() {
            return Err(Error::Degenerate { time: path.times[i], state: path.values[i] });
        }
        clock.push(clock[i] + (path.times[i + 1] - path.times[i]) / (s * s));
    }
    Ok(PathSolution {
        jumps: path.jumps.iter().map(|j| AppliedJump { time: clock[j.index], ..*j }).collect(),
        times: clock,
        ..path.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{JumpKernel, ScalarFn};
    use crate::models::Builtin;
    use crate::noise::{sample_noise, sample_noise_with_budget};
    use crate::solver::euler_solve;

    fn bm(seed: u64, h: f64) -> NoisePath {
        sample_noise(&IntensityMeasure::zero(), 1.0, h, seed).unwrap()
    }

    #[test]
    fn constant_sigma_scales_time() {
        let t = CoefficientTriple::constant(0.0, 2.0);
        let p = euler_solve(&t, &bm(1, 0.01), 0.0).unwrap();
        let tc = compute_tau(&p, &t).unwrap();
        for (s, tau) in tc.times.iter().zip(&tc.tau) {
            assert!((tau - 4.0 * s).abs() < 1e-12);
        }
        let x = time_change_path(&p, &tc).unwrap();
        assert!((x.times[25] - 4.0 * p.times[25]).abs() < 1e-12);
        assert_eq!(x.values, p.values);
    }

    #[test]
    fn inverse_round_trip_and_bounds() {
        let m = Builtin::Refracted.model();
        let n = sample_noise(&m.measure, 1.0, 1e-3, 3).unwrap();
        let p = euler_solve(&m.triple, &n, m.x0).unwrap();
        let tc = compute_tau(&p, &m.triple).unwrap();
        for (&t, &tau) in tc.times.iter().zip(&tc.tau) {
            assert!((tc.inverse(tau) - t).abs() <= 1e-3);
            assert!(tau >= t * (1.0 - 1e-12) && tau <= 4.0 * t * (1.0 + 1e-12));
            assert!(tau <= m.triple.bound_k * m.triple.bound_k * t + 1e-12);
        }
        assert!(tc.tau.windows(2).all(|w| w[0] < w[1]));
        // additivity over a split point
        let k = 400;
        let head: f64 = (0..k).map(|i| tc.tau[i + 1] - tc.tau[i]).sum();
        let tail: f64 = (k..tc.tau.len() - 1).map(|i| tc.tau[i + 1] - tc.tau[i]).sum();
        assert!((head + tail - tc.total()).abs() < 1e-12);
        let x = time_change_path(&p, &tc).unwrap();
        assert_eq!(x.jumps.len(), p.jumps.len());
    }

    #[test]
    fn single_regime_below_q() {
        // x0 far below q with no jumps: sigma = sigma2 throughout
        let m = Builtin::Refracted.model();
        let p = euler_solve(&m.triple, &bm(2, 1e-3), -50.0).unwrap();
        let tc = compute_tau(&p, &m.triple).unwrap();
        assert!((tc.total() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn zero_sigma_is_degenerate() {
        let t = CoefficientTriple::constant(1.0, 0.0);
        let p = euler_solve(&t, &bm(0, 0.1), 0.0).unwrap();
        assert!(matches!(compute_tau(&p, &t), Err(Error::Degenerate { .. })));
    }

    #[test]
    fn brownian_batch_passes_and_scaled_fails() {
        let t = CoefficientTriple::constant(0.0, 1.0);
        let ws: Vec<BmPath> = (0..1000u64)
            .map(|s| {
                let p = euler_solve(&t, &bm(s, 1e-3), 0.0).unwrap();
                martingale_part(&p, &t)
            })
            .collect();
        let r = verify_bm(&ws, 1.0, BmThresholds::default()).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.lag1_correlation.abs() < 0.01);
        let doubled: Vec<BmPath> = ws.iter().map(|w| w.scaled(2.0)).collect();
        let r = verify_bm(&doubled, 1.0, BmThresholds::default()).unwrap();
        assert!(!r.pass && (r.mean_qv - 4.0).abs() < 0.1);
        assert!(verify_bm(&[], 1.0, BmThresholds::default()).is_err());
    }

    #[test]
    fn unit_sigma_accepts_everything() {
        let t = CoefficientTriple::constant(0.3, 1.0).with_jump(JumpKernel::additive());
        let m = IntensityMeasure::atom(-0.5, 3.0);
        let n = sample_noise_with_budget(&m, 1.0, 0.01, 8, 1.0).unwrap();
        let direct = euler_solve(&t, &n, 0.0).unwrap();
        let tilde = solve_timechanged(&t, &m, &n, 0.0).unwrap();
        assert_eq!(direct.values, tilde.values);
        assert_eq!(tilde.jumps.len(), n.jumps.len());
    }

    #[test]
    fn no_drift_no_jumps_is_x0_plus_w() {
        let t = CoefficientTriple::new(ScalarFn::constant(0.0), ScalarFn::step(0.0, 3.0, 1.0), JumpKernel::zero())
            .with_bounds(9.0, 1.0);
        let m = IntensityMeasure::zero();
        let n = sample_noise_with_budget(&m, 1.0, 0.01, 4, 1.0).unwrap();
        let p = solve_timechanged(&t, &m, &n, 0.5).unwrap();
        for (x, b) in p.values.iter().zip(&n.brownian) {
            assert!((x - 0.5 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn preconditions() {
        let m = Builtin::Refracted.model();
        let low = sample_noise(&m.measure, 1.0, 0.1, 0).unwrap();
        let zero_floor = CoefficientTriple::constant(0.0, 1.0).with_bounds(1.0, 0.0);
        assert!(matches!(solve_timechanged(&zero_floor, &m.measure, &low, 0.0), Err(Error::Precondition(_))));
        let t = CoefficientTriple::constant(0.0, 2.0);
        assert!(matches!(solve_timechanged(&t, &m.measure, &low, 0.0), Ok(_)));
        let t = CoefficientTriple::constant(0.0, 0.5);
        assert!(matches!(solve_timechanged(&t, &m.measure, &low, 0.0), Err(Error::Precondition(_))));
        let other = IntensityMeasure::atom(-2.0, 1.0);
        assert!(matches!(solve_timechanged(&m.triple, &other, &low, 0.0), Err(Error::Input(_))));
    }

    #[test]
    fn acceptance_fraction_matches_envelope_ratio() {
        // sigma in {0.5, 1}: envelope 4, acceptance sigma^-2 / 4
        let t = CoefficientTriple::new(ScalarFn::constant(0.0), ScalarFn::step(0.0, 0.5, 1.0), JumpKernel::additive())
            .with_discontinuities(vec![0.0])
            .with_bounds(1.0, 0.5);
        let m = IntensityMeasure::atom(0.2, 2.0);
        let budget = thinning_budget(&t).unwrap();
        let (mut accepted, mut expected, mut candidates) = (0.0, Vec::new(), 0usize);
        for seed in 0..2000u64 {
            let n = sample_noise_with_budget(&m, 2.0, 0.01, seed, budget).unwrap();
            let p = solve_timechanged(&t, &m, &n, 0.0).unwrap();
            accepted += p.jumps.len() as f64;
            candidates += n.jumps.len();
            for &ix in &n.jump_index {
                let s = t.diffusion.eval(p.left[ix]);
                expected.push(1.0 / (s * s) / budget);
            }
        }
        let frac = accepted / candidates as f64;
        let (mean, _) = mean_stderr(&expected);
        let se = (mean * (1.0 - mean) / candidates as f64).sqrt();
        assert!((frac - mean).abs() < 3.0 * se, "{frac} vs {mean}");
    }

    #[test]
    fn inversion_recovers_original_clock() {
        let t = CoefficientTriple::constant(0.0, 2.0).with_bounds(4.0, 2.0);
        let m = IntensityMeasure::zero();
        let n = sample_noise_with_budget(&m, 4.0, 0.04, 1, 0.25).unwrap();
        let tilde = solve_timechanged(&t, &m, &n, 0.0).unwrap();
        let back = invert_timechanged(&tilde, &t).unwrap();
        assert!((back.horizon() - 1.0).abs() < 1e-12);
        assert!((back.times[50] - 0.5).abs() < 1e-12);
    }
}
