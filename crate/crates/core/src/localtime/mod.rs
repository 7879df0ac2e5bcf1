//! Local-time estimators: the occupation-time density with a box kernel and
//! the discrete residual of Tanaka's formula.

use std::io::Write;

use serde::Serialize;

use crate::coefficients::{Dynamics, ModulusSpec};
use crate::error::{Error, Result};
use crate::solver::PathSolution;
use crate::stats::mean_stderr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Occupation,
    Tanaka,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Occupation => "occupation",
            EstimatorKind::Tanaka => "tanaka",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LocalTimeEstimate {
    pub level: f64,
    pub t: f64,
    pub kind: EstimatorKind,
    /// Clipped at zero for the Tanaka estimator.
    pub value: f64,
    /// Value before clipping.
    pub raw: f64,
    pub eps: Option<f64>,
    /// Standard error over a batch; `None` for a single path.
    pub stderr: Option<f64>,
    pub count: usize,
}

impl LocalTimeEstimate {
    fn single(level: f64, t: f64, kind: EstimatorKind, raw: f64, eps: Option<f64>) -> Self {
        Self { level, t, kind, value: raw.max(0.0), raw, eps, stderr: None, count: 1 }
    }
}

/// Mean and standard error of single-path estimates of one kind and level.
pub fn batch_estimate(estimates: &[LocalTimeEstimate]) -> Result<LocalTimeEstimate> {
    let first = estimates.first().ok_or_else(|| Error::Input("empty batch".into()))?;
    let values: Vec<f64> = estimates.iter().map(|e| e.value).collect();
    let raws: Vec<f64> = estimates.iter().map(|e| e.raw).collect();
    let (value, se) = mean_stderr(&values);
    Ok(LocalTimeEstimate {
        value,
        raw: mean_stderr(&raws).0,
        stderr: Some(se),
        count: estimates.len(),
        ..*first
    })
}

/// `sigma(X_{t_i})` for every cell of the path.
pub fn sigma_along<D: Dynamics + ?Sized>(path: &PathSolution, dynamics: &D) -> Vec<f64> {
    path.values[..path.values.len() - 1].iter().map(|&x| dynamics.diffusion(x)).collect()
}

/// Number of whole or partial cells within `[0, t]` and the fraction of the
/// last one that counts.
fn cells_until(times: &[f64], t: f64) -> impl Iterator<Item = (usize, f64)> + '_ {
    (0..times.len() - 1).map_while(move |i| {
        let (a, b) = (times[i], times[i + 1]);
        if a >= t {
            None
        } else if b <= t {
            Some((i, b - a))
        } else {
            Some((i, t - a))
        }
    })
}

fn check_t(path: &PathSolution, t: f64) -> Result<()> {
    path.check_horizon(t)
}

/// `(1 / 2eps) sum 1{|X_{s-} - a| < eps} sigma^2 ds` on `[0, t]`.
pub fn occupation_local_time(
    path: &PathSolution,
    sigma: &[f64],
    a: f64,
    eps: f64,
    t: f64,
) -> Result<LocalTimeEstimate> {
    check_t(path, t)?;
    check_eps(eps)?;
    check_sigma(path, sigma)?;
    let mut s = 0.0;
    for (i, dt) in cells_until(&path.times, t) {
        if (path.values[i] - a).abs() < eps {
            s += sigma[i] * sigma[i] * dt;
        }
    }
    Ok(LocalTimeEstimate::single(a, t, EstimatorKind::Occupation, s / (2.0 * eps), Some(eps)))
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Input(format!("bandwidth must be positive, got {eps}")));
    }
    Ok(())
}

fn check_sigma(path: &PathSolution, sigma: &[f64]) -> Result<()> {
    if sigma.len() + 1 != path.times.len() {
        return Err(Error::Input(format!(
            "{} diffusion values for {} cells",
            sigma.len(),
            path.times.len() - 1
        )));
    }
    Ok(())
}

/// Occupation estimates at uniformly spaced `levels`, computed in one pass.
pub fn occupation_profile(path: &PathSolution, sigma: &[f64], levels: &[f64], eps: f64, t: f64) -> Result<Vec<f64>> {
    check_t(path, t)?;
    check_eps(eps)?;
    check_sigma(path, sigma)?;
    let mut out = vec![0.0; levels.len()];
    if levels.is_empty() {
        return Ok(out);
    }
    let lo = levels[0];
    let step = if levels.len() > 1 { levels[1] - levels[0] } else { 1.0 };
    for (i, dt) in cells_until(&path.times, t) {
        let x = path.values[i];
        let w = sigma[i] * sigma[i] * dt / (2.0 * eps);
        let first = (((x - eps - lo) / step).floor().max(0.0)) as usize;
        for (k, slot) in out.iter_mut().enumerate().skip(first) {
            let d = levels[k] - x;
            if d >= eps {
                break;
            }
            if d.abs() < eps {
                *slot += w;
            }
        }
    }
    Ok(out)
}

/// Twice the residual of Tanaka's formula for `(X - a)^+`: continuous part by
/// left-point sums, jump terms exact. Every grid point whose value differs
/// from its left limit is treated as a jump.
fn tanaka_raw(times: &[f64], values: &[f64], left: &[f64], a: f64, t: f64) -> f64 {
    let pos = |x: f64| (x - a).max(0.0);
    let neg = |x: f64| (a - x).max(0.0);
    let mut integral = 0.0;
    let mut corrections = 0.0;
    let mut last = 0;
    for i in 0..times.len() - 1 {
        if times[i + 1] > t {
            break;
        }
        last = i + 1;
        if values[i] > a {
            integral += left[i + 1] - values[i];
        }
        let (l, v) = (left[i + 1], values[i + 1]);
        if v != l {
            if l > a {
                integral += v - l;
                corrections += neg(v);
            } else {
                corrections += pos(v);
            }
        }
    }
    2.0 * (pos(values[last]) - pos(values[0]) - integral - corrections)
}

/// Tanaka residual estimate of `L_t^a`, read at the last grid point `<= t`.
pub fn tanaka_local_time(path: &PathSolution, a: f64, t: f64) -> Result<LocalTimeEstimate> {
    check_t(path, t)?;
    let raw = tanaka_raw(&path.times, &path.values, &path.left, a, t);
    Ok(LocalTimeEstimate::single(a, t, EstimatorKind::Tanaka, raw, None))
}

/// Local-time statistics of the difference `X1 - X2` of two paths on one grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LtStat {
    /// Tanaka estimate at level 0.
    pub tanaka: LocalTimeEstimate,
    /// Occupation estimate near 0 with weights `(sigma(X1) - sigma(X2))^2`.
    pub occupation: LocalTimeEstimate,
    /// Tanaka estimates at `0, ±eps, ±2eps`, in increasing level order.
    pub ladder: Vec<LocalTimeEstimate>,
}

pub fn lt_condition_stat(
    path1: &PathSolution,
    path2: &PathSolution,
    sigma1: &[f64],
    sigma2: &[f64],
    t: f64,
    eps: f64,
) -> Result<LtStat> {
    if path1.times != path2.times {
        return Err(Error::Input("paths do not share a grid".into()));
    }
    check_t(path1, t)?;
    check_eps(eps)?;
    check_sigma(path1, sigma1)?;
    check_sigma(path2, sigma2)?;
    let values: Vec<f64> = path1.values.iter().zip(&path2.values).map(|(a, b)| a - b).collect();
    let left: Vec<f64> = path1.left.iter().zip(&path2.left).map(|(a, b)| a - b).collect();
    let times = &path1.times;
    let tanaka_at = |a: f64| LocalTimeEstimate::single(a, t, EstimatorKind::Tanaka, tanaka_raw(times, &values, &left, a, t), None);

    let mut occ = 0.0;
    for (i, dt) in cells_until(times, t) {
        if values[i].abs() < eps {
            let d = sigma1[i] - sigma2[i];
            occ += d * d * dt;
        }
    }
    Ok(LtStat {
        tanaka: tanaka_at(0.0),
        occupation: LocalTimeEstimate::single(0.0, t, EstimatorKind::Occupation, occ / (2.0 * eps), Some(eps)),
        ladder: [-2.0, -1.0, 0.0, 1.0, 2.0].iter().map(|k| tanaka_at(k * eps)).collect(),
    })
}

/// `int 1{0 < X_s <= eps} rho(X_s)^{-1} sigma^2 ds` on `[0, t]`, a raw
/// diagnostic with no acceptance threshold.
pub fn rho_weighted_occupation(path: &PathSolution, sigma: &[f64], rho: &ModulusSpec, eps: f64, t: f64) -> Result<f64> {
    check_t(path, t)?;
    check_eps(eps)?;
    check_sigma(path, sigma)?;
    let mut s = 0.0;
    for (i, dt) in cells_until(&path.times, t) {
        let x = path.values[i];
        if x > 0.0 && x <= eps {
            s += sigma[i] * sigma[i] * dt / rho.rho(x);
        }
    }
    Ok(s)
}

/// Default bandwidth `max(sqrt h, 10 * resolution)`.
pub fn default_bandwidth(h: f64, resolution: f64) -> f64 {
    h.sqrt().max(10.0 * resolution)
}

/// Absolute gap in the occupation identity for the Gaussian bump
/// `f(a) = exp(-(a - c)^2 / (2 w^2))`: the trapezoid integral of the
/// occupation profile against `f` versus `sum f(X_{s-}) sigma^2 ds`.
/// Returns `(gap, sum)`.
pub fn occupation_identity_gap(
    path: &PathSolution,
    sigma: &[f64],
    center: f64,
    width: f64,
    eps: f64,
    t: f64,
) -> Result<(f64, f64)> {
    let f = |a: f64| (-(a - center) * (a - center) / (2.0 * width * width)).exp();
    let step = eps / 8.0;
    let half = 8.0 * width + 2.0 * eps;
    let n = (2.0 * half / step).ceil() as usize + 1;
    let levels: Vec<f64> = (0..n).map(|k| center - half + k as f64 * step).collect();
    let profile = occupation_profile(path, sigma, &levels, eps, t)?;
    let mut integral = 0.0;
    for k in 0..n - 1 {
        integral += 0.5 * step * (profile[k] * f(levels[k]) + profile[k + 1] * f(levels[k + 1]));
    }
    let mut direct = 0.0;
    for (i, dt) in cells_until(&path.times, t) {
        direct += f(path.values[i]) * sigma[i] * sigma[i] * dt;
    }
    Ok(((integral - direct).abs(), direct))
}

/// CSV rows `a,t,kind,eps,value,stderr,count`.
pub fn write_estimates_csv<W: Write>(estimates: &[LocalTimeEstimate], mut w: W) -> std::io::Result<()> {
    writeln!(w, "a,t,kind,eps,value,stderr,count")?;
    for e in estimates {
        let eps = e.eps.map(|x| x.to_string()).unwrap_or_default();
        let se = e.stderr.map(|x| x.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{},{},{},{}", e.level, e.t, e.kind.as_str(), eps, e.value, se, e.count)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{CoefficientTriple, IntensityMeasure, JumpKernel};
    use crate::models::Builtin;
    use crate::noise::sample_noise;
    use crate::solver::euler_solve;

    fn bm_path(seed: u64, h: f64) -> PathSolution {
        let n = sample_noise(&IntensityMeasure::zero(), 1.0, h, seed).unwrap();
        euler_solve(&CoefficientTriple::constant(0.0, 1.0), &n, 0.0).unwrap()
    }

    #[test]
    fn zero_bracket_gives_zero_occupation() {
        let t = CoefficientTriple::constant(1.0, 0.0).with_jump(JumpKernel::additive());
        let n = sample_noise(&IntensityMeasure::atom(-0.5, 3.0), 1.0, 0.01, 1).unwrap();
        let p = euler_solve(&t, &n, 0.0).unwrap();
        let s = sigma_along(&p, &t);
        for a in [-1.0, 0.0, 0.3] {
            assert_eq!(occupation_local_time(&p, &s, a, 0.1, 1.0).unwrap().value, 0.0);
        }
    }

    #[test]
    fn far_level_gives_zero() {
        let p = bm_path(0, 1e-3);
        let s = vec![1.0; p.times.len() - 1];
        assert_eq!(occupation_local_time(&p, &s, 50.0, 0.1, 1.0).unwrap().value, 0.0);
        assert_eq!(tanaka_local_time(&p, 50.0, 1.0).unwrap().value, 0.0);
    }

    #[test]
    fn finite_variation_path_has_small_tanaka() {
        let t = CoefficientTriple::constant(1.0, 0.0);
        let n = sample_noise(&IntensityMeasure::zero(), 1.0, 1e-3, 0).unwrap();
        let p = euler_solve(&t, &n, 0.0).unwrap();
        let e = tanaka_local_time(&p, 0.4567, 1.0).unwrap();
        assert!(e.raw.abs() <= 2.0 * 1e-3 + 1e-12, "{}", e.raw);
    }

    #[test]
    fn staying_above_level_telescopes() {
        let p = bm_path(3, 1e-3);
        let e = tanaka_local_time(&p, -100.0, 1.0).unwrap();
        assert!(e.raw.abs() < 1e-12);
    }

    #[test]
    fn estimators_agree_on_brownian_batch() {
        let paths: Vec<_> = (0..2000u64).map(|s| bm_path(s, 1e-3)).collect();
        for a in [-0.5, 0.0, 0.5] {
            let occ: Vec<_> = paths
                .iter()
                .map(|p| occupation_local_time(p, &vec![1.0; p.times.len() - 1], a, 0.05, 1.0).unwrap())
                .collect();
            let tan: Vec<_> = paths.iter().map(|p| tanaka_local_time(p, a, 1.0).unwrap()).collect();
            let (o, t) = (batch_estimate(&occ).unwrap(), batch_estimate(&tan).unwrap());
            let joint = (o.stderr.unwrap().powi(2) + t.stderr.unwrap().powi(2)).sqrt();
            assert!((o.value - t.value).abs() < 3.0 * joint, "a {a}: {} vs {}", o.value, t.value);
        }
    }

    #[test]
    fn occupation_is_monotone_in_t() {
        let p = bm_path(5, 1e-3);
        let s = vec![1.0; p.times.len() - 1];
        let mut prev = 0.0;
        for k in 1..=10 {
            let v = occupation_local_time(&p, &s, 0.0, 0.05, k as f64 / 10.0).unwrap().value;
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn difference_statistics() {
        let m = Builtin::Refracted.model();
        let n = sample_noise(&m.measure, 1.0, 1e-3, 2).unwrap();
        let p = euler_solve(&m.triple, &n, m.x0).unwrap();
        let s = sigma_along(&p, &m.triple);
        let same = lt_condition_stat(&p, &p, &s, &s, 1.0, 0.05).unwrap();
        assert_eq!(same.tanaka.raw, 0.0);
        assert_eq!(same.occupation.raw, 0.0);
        assert!(same.ladder.iter().all(|e| e.value == 0.0));

        let mut shifted = p.clone();
        shifted.values.iter_mut().for_each(|v| *v += 1.0);
        shifted.left.iter_mut().for_each(|v| *v += 1.0);
        let st = lt_condition_stat(&p, &shifted, &s, &s, 1.0, 0.05).unwrap();
        assert_eq!(st.tanaka.value, 0.0);
        let st = lt_condition_stat(&shifted, &p, &s, &s, 1.0, 0.05).unwrap();
        assert!(st.tanaka.raw.abs() < 1e-12);

        let other = bm_path(0, 0.1);
        assert!(lt_condition_stat(&p, &other, &s, &s, 1.0, 0.05).is_err());
    }

    #[test]
    fn profile_matches_pointwise() {
        let p = bm_path(9, 1e-3);
        let s = vec![1.0; p.times.len() - 1];
        let levels: Vec<f64> = (0..41).map(|k| -1.0 + 0.05 * k as f64).collect();
        let prof = occupation_profile(&p, &s, &levels, 0.07, 0.8).unwrap();
        for (a, v) in levels.iter().zip(&prof) {
            let e = occupation_local_time(&p, &s, *a, 0.07, 0.8).unwrap();
            assert!((e.value - v).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_gap_is_small() {
        let p = bm_path(1, 1e-3);
        let s = vec![1.0; p.times.len() - 1];
        let (gap, total) = occupation_identity_gap(&p, &s, 0.0, 0.5, 0.03, 1.0).unwrap();
        assert!(gap / total < 0.01, "{gap} {total}");
    }

    #[test]
    fn rho_diagnostic_counts_only_positive_side() {
        let p = bm_path(1, 1e-3);
        let s = vec![1.0; p.times.len() - 1];
        let v = rho_weighted_occupation(&p, &s, &ModulusSpec::linear(1.0), 0.1, 1.0).unwrap();
        assert!(v >= 0.0 && v.is_finite());
    }

    #[test]
    fn csv_export() {
        let p = bm_path(1, 0.01);
        let e = vec![tanaka_local_time(&p, 0.0, 1.0).unwrap()];
        let mut buf = Vec::new();
        write_estimates_csv(&e, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("0,1,tanaka,,"));
    }
}
