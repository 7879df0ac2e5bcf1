//! The refracted risk model: drift switching at `p`, volatility switching at
//! `q`, claims arriving as negative additive jumps.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::batch::map_seeds;
use crate::coefficients::{CoefficientTriple, IntensityMeasure, JumpKernel, ScalarFn};
use crate::error::{Error, Result};
use crate::noise::sample_noise;
use crate::solver::{euler_solve, PathSolution};
use crate::stats::mean_stderr;

pub const MIN_PATHS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefractedParams {
    pub mu1: f64,
    pub mu2: f64,
    pub p: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub q: f64,
    pub claims: IntensityMeasure,
}

impl Default for RefractedParams {
    fn default() -> Self {
        Self {
            mu1: 1.0,
            mu2: 2.0,
            p: 2.0,
            sigma1: 1.0,
            sigma2: 2.0,
            q: 1.0,
            claims: IntensityMeasure::atom(-1.0, 1.0),
        }
    }
}

impl RefractedParams {
    /// Dividend rate `mu2 - mu1` paid while the surplus is at or above `p`.
    pub fn delta(&self) -> f64 {
        self.mu2 - self.mu1
    }

    fn check_claims(&self) -> Result<()> {
        self.claims.validate()?;
        let positive = self.claims.atoms.iter().any(|a| a.mass > 0.0 && a.location >= 0.0);
        let continuous_positive = match &self.claims.continuous {
            Some(c) => c.charges_nonnegative(),
            None => false,
        };
        if positive || continuous_positive {
            return Err(Error::Parameter("claim measure must live on the negative half-line".into()));
        }
        Ok(())
    }

    fn check_finite(&self) -> Result<()> {
        for (name, v) in [
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("p", self.p),
            ("sigma1", self.sigma1),
            ("sigma2", self.sigma2),
            ("q", self.q),
        ] {
            if !v.is_finite() {
                return Err(Error::Parameter(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// Coefficients `b = mu1 1{x>=p} + mu2 1{x<p}`, `sigma = sigma1 1{x>=q} +
/// sigma2 1{x<q}`, `g(x, u) = u`, with `K` and `sigma_0` filled in and the
/// modulus `f = (sigma1 - sigma2)^2 1{x>=q}` attached.
pub fn build_refracted(params: &RefractedParams) -> Result<CoefficientTriple> {
    if !(params.sigma1 > 0.0 && params.sigma2 > 0.0) {
        return Err(Error::Parameter(format!(
            "volatilities must be positive, got sigma1 = {}, sigma2 = {}",
            params.sigma1, params.sigma2
        )));
    }
    triple_of(params)
}

/// As [`build_refracted`] but allowing zero volatility, for noise-free runs.
fn triple_of(params: &RefractedParams) -> Result<CoefficientTriple> {
    params.check_finite()?;
    params.check_claims()?;
    if params.sigma1 < 0.0 || params.sigma2 < 0.0 {
        return Err(Error::Parameter("volatilities must be nonnegative".into()));
    }
    let RefractedParams { mu1, mu2, p, sigma1, sigma2, q, .. } = *params;
    let mut breaks = Vec::new();
    if mu1 != mu2 {
        breaks.push(p);
    }
    if sigma1 != sigma2 {
        breaks.push(q);
    }
    let abs_claims = params.claims.integrate(f64::abs)?.value;
    let jump_part = params.claims.integrate(|u| u.abs().max(u * u))?.value;
    let b_max = mu1.abs().max(mu2.abs());
    let s_max = sigma1.max(sigma2);
    let s_min = sigma1.min(sigma2);
    let mut k = b_max * b_max + s_max * s_max + jump_part;
    k = k.max(s_max);
    if s_min > 0.0 {
        k = k.max((b_max + abs_claims) / (s_min * s_min));
    }
    let gap = (sigma1 - sigma2) * (sigma1 - sigma2);
    Ok(CoefficientTriple::new(
        ScalarFn::step(p, mu2, mu1),
        ScalarFn::step(q, sigma2, sigma1),
        JumpKernel::additive(),
    )
    .with_discontinuities(breaks)
    .with_bounds(k, s_min)
    .with_modulus(ScalarFn::step(q, 0.0, gap)))
}

/// Per-path outcome of a risk run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathOutcome {
    pub seed: u64,
    pub ruined: bool,
    pub ruin_time: Option<f64>,
    pub occupation_above_p: f64,
    pub terminal: f64,
}

/// First grid time at which the surplus (post-jump value or left limit) is
/// below zero.
pub fn ruin_time(path: &PathSolution) -> Option<f64> {
    (0..path.times.len())
        .find(|&i| path.left[i] < 0.0 || path.values[i] < 0.0)
        .map(|i| path.times[i])
}

/// Time spent at or above `p`, by the left-point rule.
pub fn occupation_above(path: &PathSolution, p: f64) -> f64 {
    path.times
        .windows(2)
        .zip(&path.values)
        .filter(|(_, &x)| x >= p)
        .map(|(w, _)| w[1] - w[0])
        .sum()
}

pub fn simulate_path(params: &RefractedParams, x0: f64, horizon: f64, h: f64, seed: u64) -> Result<PathSolution> {
    let triple = triple_of(params)?;
    let noise = sample_noise(&params.claims, horizon, h, seed)?;
    euler_solve(&triple, &noise, x0)
}

/// Simulate paths for `seeds` and record ruin and occupation outcomes.
pub fn outcomes(params: &RefractedParams, x0: f64, horizon: f64, h: f64, seeds: &[u64]) -> Result<Vec<PathOutcome>> {
    if seeds.len() < MIN_PATHS {
        return Err(Error::Underpowered { n: seeds.len(), min: MIN_PATHS });
    }
    let triple = triple_of(params)?;
    map_seeds(seeds, |seed| {
        let noise = sample_noise(&params.claims, horizon, h, seed)?;
        let path = euler_solve(&triple, &noise, x0)?;
        let rt = ruin_time(&path);
        Ok(PathOutcome {
            seed,
            ruined: rt.is_some(),
            ruin_time: rt,
            occupation_above_p: occupation_above(&path, params.p),
            terminal: path.terminal(),
        })
    })
}

/// Finite-horizon ruin probability estimate and its standard error.
pub fn ruin_probability(params: &RefractedParams, x0: f64, horizon: f64, h: f64, seeds: &[u64]) -> Result<(f64, f64)> {
    Ok(ruin_of(&outcomes(params, x0, horizon, h, seeds)?))
}

pub fn ruin_of(outcomes: &[PathOutcome]) -> (f64, f64) {
    let flags: Vec<f64> = outcomes.iter().map(|o| if o.ruined { 1.0 } else { 0.0 }).collect();
    mean_stderr(&flags)
}

/// `E[delta * time at or above p]` and its standard error.
pub fn dividend_stat(params: &RefractedParams, x0: f64, horizon: f64, h: f64, seeds: &[u64]) -> Result<(f64, f64)> {
    check_delta(params)?;
    Ok(dividend_of(params, &outcomes(params, x0, horizon, h, seeds)?))
}

pub fn check_delta(params: &RefractedParams) -> Result<()> {
    if params.delta() < 0.0 {
        return Err(Error::Parameter(format!(
            "dividend rate mu2 - mu1 = {} is negative",
            params.delta()
        )));
    }
    Ok(())
}

pub fn dividend_of(params: &RefractedParams, outcomes: &[PathOutcome]) -> (f64, f64) {
    let d = params.delta();
    let xs: Vec<f64> = outcomes.iter().map(|o| d * o.occupation_above_p).collect();
    mean_stderr(&xs)
}

pub fn write_outcomes_csv<W: Write>(outcomes: &[PathOutcome], mut w: W) -> std::io::Result<()> {
    writeln!(w, "seed,ruined,ruin_time,occupation_above_p,terminal")?;
    for o in outcomes {
        let rt = o.ruin_time.map(|t| t.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{},{}", o.seed, o.ruined as u8, rt, o.occupation_above_p, o.terminal)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::seed_block;
    use crate::coefficients::{check_condition, check_grid, check_modulus, ConditionId, ModulusCheck, Verdict};

    fn noise_free(mu: f64, claims: IntensityMeasure) -> RefractedParams {
        RefractedParams { mu1: mu, mu2: mu, sigma1: 0.0, sigma2: 0.0, claims, ..Default::default() }
    }

    #[test]
    fn default_constants() {
        let t = build_refracted(&RefractedParams::default()).unwrap();
        assert_eq!(t.bound_k, 9.0);
        assert_eq!(t.sigma_lower, 1.0);
        assert_eq!(t.discontinuities, vec![1.0, 2.0]);
    }

    #[test]
    fn conditions_hold_for_generic_params() {
        let params = RefractedParams::default();
        let t = build_refracted(&params).unwrap();
        let grid = check_grid(&t, params.q.min(params.p) - 5.0, params.q.max(params.p) + 5.0, 401);
        for id in [
            ConditionId::BoundedCoefficients,
            ConditionId::DiffusionLowerBound,
            ConditionId::DriftDominated,
            ConditionId::DiffusionBounded,
            ConditionId::MonotoneJumps,
            ConditionId::DiffusionElliptic,
        ] {
            let r = check_condition(&t, &params.claims, id, &grid).unwrap();
            assert_eq!(r.verdict, Verdict::Pass, "{}", id.as_str());
        }
        let f = t.modulus.clone().unwrap();
        let r = check_modulus(&t, &ModulusCheck::Monotone(f), &grid).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn equal_regimes_are_constant() {
        let params = RefractedParams { mu2: 1.0, sigma2: 1.0, ..Default::default() };
        let t = build_refracted(&params).unwrap();
        assert!(t.discontinuities.is_empty());
        let grid = check_grid(&t, -4.0, 6.0, 101);
        let r = check_modulus(&t, &ModulusCheck::Monotone(t.modulus.clone().unwrap()), &grid).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn parameter_errors() {
        let bad = RefractedParams { sigma1: 0.0, ..Default::default() };
        assert!(matches!(build_refracted(&bad), Err(Error::Parameter(_))));
        let up = RefractedParams { claims: IntensityMeasure::atom(1.0, 1.0), ..Default::default() };
        assert!(matches!(build_refracted(&up), Err(Error::Parameter(_))));
        let neg = RefractedParams { mu1: 3.0, ..Default::default() };
        assert!(matches!(dividend_stat(&neg, 1.0, 1.0, 0.1, &seed_block(0, 100)), Err(Error::Parameter(_))));
        assert!(matches!(
            ruin_probability(&RefractedParams::default(), 1.0, 1.0, 0.1, &seed_block(0, 10)),
            Err(Error::Underpowered { .. })
        ));
    }

    #[test]
    fn deterministic_cases() {
        let seeds = seed_block(0, 100);
        let up = noise_free(1.0, IntensityMeasure::zero());
        assert_eq!(ruin_probability(&up, 1.0, 1.0, 0.01, &seeds).unwrap(), (0.0, 0.0));
        let down = noise_free(-1.0, IntensityMeasure::zero());
        let out = outcomes(&down, 0.5, 1.0, 0.01, &seeds).unwrap();
        assert_eq!(ruin_of(&out), (1.0, 0.0));
        assert!(out.iter().all(|o| (o.ruin_time.unwrap() - 0.5).abs() < 0.011));
        // always above p = 2 with positive drift: dividends delta * T
        let above = RefractedParams { mu1: 1.0, mu2: 1.5, sigma1: 0.0, sigma2: 0.0, claims: IntensityMeasure::zero(), ..Default::default() };
        let (d, se) = dividend_stat(&above, 10.0, 1.0, 0.01, &seeds).unwrap();
        assert!((d - 0.5).abs() < 1e-12 && se == 0.0);
        let flat = RefractedParams { mu2: 1.0, ..Default::default() };
        assert_eq!(dividend_stat(&flat, 1.5, 1.0, 0.01, &seeds).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn dividends_bounded_per_path() {
        let params = RefractedParams::default();
        let out = outcomes(&params, 1.5, 1.0, 1e-3, &seed_block(0, 200)).unwrap();
        assert!(out.iter().all(|o| o.occupation_above_p <= 1.0 + 1e-12));
    }

    #[test]
    fn higher_capital_never_ruins_more() {
        let params = RefractedParams::default();
        let seeds = seed_block(1000, 200);
        let low = outcomes(&params, 0.5, 1.0, 1e-3, &seeds).unwrap();
        let high = outcomes(&params, 1.5, 1.0, 1e-3, &seeds).unwrap();
        assert!(ruin_of(&low).0 >= ruin_of(&high).0);
        for (l, h) in low.iter().zip(&high) {
            assert!(!h.ruined || l.ruined, "seed {}", l.seed);
        }
    }

    #[test]
    fn shared_noise_paths_stay_ordered() {
        let params = RefractedParams::default();
        for seed in 0..200 {
            let lo = simulate_path(&params, 0.5, 1.0, 1e-3, seed).unwrap();
            let hi = simulate_path(&params, 1.5, 1.0, 1e-3, seed).unwrap();
            for i in 0..lo.times.len() {
                assert!(lo.values[i] <= hi.values[i], "seed {seed} at {}", lo.times[i]);
            }
        }
    }

    #[test]
    fn csv_rows() {
        let out = outcomes(&noise_free(-1.0, IntensityMeasure::zero()), 0.5, 1.0, 0.25, &seed_block(0, 100)).unwrap();
        let mut buf = Vec::new();
        write_outcomes_csv(&out, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 101);
        assert!(text.lines().nth(1).unwrap().starts_with("0,1,0.75,"));
    }
}
