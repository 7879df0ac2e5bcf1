//! Grid-based checks of the sufficient conditions on the coefficients.
//!
//! A verdict only speaks for the supplied grid; reports carry the grid extent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::functions::ScalarFn;
use super::measure::IntensityMeasure;
use super::triple::CoefficientTriple;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConditionId {
    /// `b^2 + sigma^2 + ∫ |g| ∨ g^2 dmu <= K`
    #[serde(rename = "2a")]
    BoundedCoefficients,
    /// `|sigma| >= sigma_0 > 0`
    #[serde(rename = "2b")]
    DiffusionLowerBound,
    /// `|b| + ∫ |g| dmu <= K sigma^2`
    #[serde(rename = "3a")]
    DriftDominated,
    /// `0 < |sigma| <= K`
    #[serde(rename = "3b")]
    DiffusionBounded,
    /// `x + g(x, u)` nondecreasing in `x`
    #[serde(rename = "4a")]
    MonotoneJumps,
    /// `0 < sigma_0 <= |sigma| <= K`
    #[serde(rename = "4b")]
    DiffusionElliptic,
    #[serde(rename = "mod_rho")]
    ModulusRho,
    #[serde(rename = "mod_f")]
    ModulusMonotone,
}

impl ConditionId {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "2a" => Self::BoundedCoefficients,
            "2b" => Self::DiffusionLowerBound,
            "3a" => Self::DriftDominated,
            "3b" => Self::DiffusionBounded,
            "4a" => Self::MonotoneJumps,
            "4b" => Self::DiffusionElliptic,
            "mod_rho" => Self::ModulusRho,
            "mod_f" => Self::ModulusMonotone,
            other => return Err(Error::Input(format!("unknown condition id {other:?}"))),
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::BoundedCoefficients => "2a",
            Self::DiffusionLowerBound => "2b",
            Self::DriftDominated => "3a",
            Self::DiffusionBounded => "3b",
            Self::MonotoneJumps => "4a",
            Self::DiffusionElliptic => "4b",
            Self::ModulusRho => "mod_rho",
            Self::ModulusMonotone => "mod_f",
        }
    }

    pub const POINTWISE: [ConditionId; 6] = [
        Self::BoundedCoefficients,
        Self::DiffusionLowerBound,
        Self::DriftDominated,
        Self::DiffusionBounded,
        Self::MonotoneJumps,
        Self::DiffusionElliptic,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Where an inequality is tightest (on pass) or most violated (on fail).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub points: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mark: Option<f64>,
}

impl Witness {
    fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDescriptor {
    pub len: usize,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub id: ConditionId,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    /// Number of violated grid points or pairs.
    pub violations: usize,
    pub grid: GridDescriptor,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Uniform grid on `[lo, hi]` merged with the triple's discontinuities in the
/// window and the midpoints between consecutive discontinuities.
pub fn check_grid(triple: &CoefficientTriple, lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let mut grid: Vec<f64> = (0..points.max(2))
        .map(|i| lo + (hi - lo) * i as f64 / (points.max(2) - 1) as f64)
        .collect();
    let inside: Vec<f64> = triple
        .discontinuities
        .iter()
        .copied()
        .filter(|d| (lo..=hi).contains(d))
        .collect();
    grid.extend(&inside);
    grid.extend(inside.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

fn prepare(grid: &[f64]) -> Result<(Vec<f64>, GridDescriptor)> {
    if grid.is_empty() {
        return Err(Error::Input("condition check needs a nonempty grid".into()));
    }
    if grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input("grid points must be finite".into()));
    }
    let mut g = grid.to_vec();
    g.sort_by(f64::total_cmp);
    g.dedup();
    let desc = GridDescriptor {
        len: g.len(),
        min: g[0],
        max: g[g.len() - 1],
    };
    Ok((g, desc))
}

fn finite(v: f64, what: &'static str, point: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation { what, point })
    }
}

/// Tracks the tightest/worst witness and the verdict over a sweep.
struct Sweep {
    worst: Option<Witness>,
    violations: usize,
    uncertain: bool,
}

impl Sweep {
    fn new() -> Self {
        Self {
            worst: None,
            violations: 0,
            uncertain: false,
        }
    }

    /// Record `lhs <= rhs` with a Monte Carlo error bar on the difference.
    fn record(&mut self, w: Witness, stderr: f64) {
        let slack = w.slack();
        if slack < 0.0 {
            if slack + 3.0 * stderr >= 0.0 {
                self.uncertain = true;
            } else {
                self.violations += 1;
            }
        } else if slack - 3.0 * stderr < 0.0 {
            self.uncertain = true;
        }
        // ties go to the later point
        if self.worst.as_ref().is_none_or(|cur| slack <= cur.slack()) {
            self.worst = Some(w);
        }
    }

    fn finish(self, id: ConditionId, grid: GridDescriptor, note: Option<String>) -> ConditionReport {
        let verdict = if self.violations > 0 {
            Verdict::Fail
        } else if self.uncertain {
            Verdict::Inconclusive
        } else {
            Verdict::Pass
        };
        ConditionReport {
            id,
            verdict,
            witness: self.worst,
            violations: self.violations,
            grid,
            note,
        }
    }
}

fn fail_report(id: ConditionId, grid: GridDescriptor, note: &str) -> ConditionReport {
    ConditionReport {
        id,
        verdict: Verdict::Fail,
        witness: Some(Witness {
            points: vec![],
            lhs: f64::NAN,
            rhs: f64::NAN,
            mark: None,
        }),
        violations: 1,
        grid,
        note: Some(note.to_string()),
    }
}

const MARK_SAMPLES: usize = 64;
const MARK_SEED: u64 = 0x4a4a_0004;

fn test_marks(measure: &IntensityMeasure) -> Result<Vec<f64>> {
    let mut marks: Vec<f64> = measure.atoms.iter().filter(|a| a.mass > 0.0).map(|a| a.location).collect();
    if measure.continuous.is_some() && measure.truncated_mass()? > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(MARK_SEED);
        for _ in 0..MARK_SAMPLES {
            marks.push(measure.sample_mark(&mut rng)?);
        }
    }
    Ok(marks)
}

/// Lower bound for `|sigma|`: the declared `sigma_0` or, when it is zero, the
/// grid minimum.
fn sigma_floor(triple: &CoefficientTriple, grid: &[f64]) -> Result<(f64, Option<String>)> {
    if triple.sigma_lower > 0.0 {
        return Ok((triple.sigma_lower, None));
    }
    let mut m = f64::INFINITY;
    for &x in grid {
        m = m.min(finite(triple.diffusion.eval(x), "diffusion", x)?.abs());
    }
    Ok((m, Some(format!("sigma_0 not declared; grid minimum {m} used"))))
}

/// Evaluate one of the pointwise conditions (2a, 2b, 3a, 3b, 4a, 4b) on a grid.
pub fn check_condition(
    triple: &CoefficientTriple,
    measure: &IntensityMeasure,
    id: ConditionId,
    grid: &[f64],
) -> Result<ConditionReport> {
    let (grid, desc) = prepare(grid)?;
    let k = triple.bound_k;
    let mut sweep = Sweep::new();
    let mut note = None;
    match id {
        ConditionId::BoundedCoefficients => {
            for &x in &grid {
                let b = finite(triple.drift.eval(x), "drift", x)?;
                let s = finite(triple.diffusion.eval(x), "diffusion", x)?;
                let jump = measure.integrate(|u| {
                    let g = triple.jump.eval(x, u);
                    g.abs().max(g * g)
                })?;
                let lhs = finite(b * b + s * s + jump.value, "jump integral", x)?;
                sweep.record(witness(vec![x], lhs, k), jump.stderr);
            }
        }
        ConditionId::DriftDominated => {
            for &x in &grid {
                let b = finite(triple.drift.eval(x), "drift", x)?;
                let s = finite(triple.diffusion.eval(x), "diffusion", x)?;
                let jump = measure.integrate(|u| triple.jump.eval(x, u).abs())?;
                let lhs = finite(b.abs() + jump.value, "jump integral", x)?;
                sweep.record(witness(vec![x], lhs, k * s * s), jump.stderr);
            }
        }
        ConditionId::DiffusionLowerBound => {
            let (floor, n) = sigma_floor(triple, &grid)?;
            note = n;
            let lower = floor.max(f64::MIN_POSITIVE);
            for &x in &grid {
                let s = finite(triple.diffusion.eval(x), "diffusion", x)?.abs();
                sweep.record(witness(vec![x], lower, s), 0.0);
            }
        }
        ConditionId::DiffusionBounded | ConditionId::DiffusionElliptic => {
            let floor = if id == ConditionId::DiffusionElliptic {
                let (f, n) = sigma_floor(triple, &grid)?;
                note = n;
                f
            } else {
                0.0
            };
            // strict positivity is encoded with the smallest positive lower bound
            let lower = floor.max(f64::MIN_POSITIVE);
            for &x in &grid {
                let s = finite(triple.diffusion.eval(x), "diffusion", x)?.abs();
                sweep.record(witness(vec![x], lower, s), 0.0);
                sweep.record(witness(vec![x], s, k), 0.0);
            }
        }
        ConditionId::MonotoneJumps => {
            let marks = test_marks(measure)?;
            if marks.is_empty() {
                note = Some("measure has no mass; condition holds vacuously".into());
            }
            for w in grid.windows(2) {
                let (x0, x1) = (w[0], w[1]);
                for &u in &marks {
                    let a = x0 + finite(triple.jump.eval(x0, u), "jump kernel", x0)?;
                    let c = x1 + finite(triple.jump.eval(x1, u), "jump kernel", x1)?;
                    let mut wit = witness(vec![x0, x1], a, c);
                    wit.mark = Some(u);
                    sweep.record(wit, 0.0);
                }
            }
        }
        ConditionId::ModulusRho | ConditionId::ModulusMonotone => {
            return Err(Error::Input(format!(
                "condition {} is a modulus check; use check_modulus",
                id.as_str()
            )))
        }
    }
    Ok(sweep.finish(id, desc, note))
}

fn witness(points: Vec<f64>, lhs: f64, rhs: f64) -> Witness {
    Witness {
        points,
        lhs,
        rhs,
        mark: None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModulusKind {
    /// `coefficient * a^exponent`
    Power { coefficient: f64, exponent: f64 },
    /// `coefficient * a * max(ln(1/a), 1)`
    Log { coefficient: f64 },
    /// Piecewise-linear through `(a, rho)` pairs, constant beyond the last.
    Table { points: Vec<(f64, f64)> },
}

/// A modulus `rho` with the stored flag `∫_{0+} da / rho(a) = ∞`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusSpec {
    pub kind: ModulusKind,
    pub divergent: bool,
}

impl ModulusSpec {
    pub fn linear(coefficient: f64) -> Self {
        Self::power(coefficient, 1.0)
    }

    pub fn power(coefficient: f64, exponent: f64) -> Self {
        Self {
            kind: ModulusKind::Power { coefficient, exponent },
            divergent: exponent >= 1.0,
        }
    }

    pub fn log(coefficient: f64) -> Self {
        Self {
            kind: ModulusKind::Log { coefficient },
            divergent: true,
        }
    }

    pub fn table(points: Vec<(f64, f64)>, divergent: bool) -> Self {
        Self {
            kind: ModulusKind::Table { points },
            divergent,
        }
    }

    pub fn rho(&self, a: f64) -> f64 {
        match &self.kind {
            ModulusKind::Power { coefficient, exponent } => coefficient * a.powf(*exponent),
            ModulusKind::Log { coefficient } => {
                if a <= 0.0 {
                    0.0
                } else {
                    coefficient * a * (1.0 / a).ln().max(1.0)
                }
            }
            ModulusKind::Table { points } => {
                if points.is_empty() {
                    return 0.0;
                }
                if a <= points[0].0 {
                    return points[0].1 * a / points[0].0.max(f64::MIN_POSITIVE);
                }
                for w in points.windows(2) {
                    let ((a0, r0), (a1, r1)) = (w[0], w[1]);
                    if a <= a1 {
                        return r0 + (r1 - r0) * (a - a0) / (a1 - a0);
                    }
                }
                points[points.len() - 1].1
            }
        }
    }
}

/// The regularity requirement on sigma for pathwise uniqueness.
#[derive(Clone, Debug)]
pub enum ModulusCheck {
    /// `|sigma(x) - sigma(y)|^2 <= rho(|x - y|)`
    Rho(ModulusSpec),
    /// `|sigma(x) - sigma(y)|^2 <= |f(x) - f(y)|`, f nondecreasing and bounded
    Monotone(ScalarFn),
}

/// Check a modulus condition on all grid pairs.
pub fn check_modulus(triple: &CoefficientTriple, check: &ModulusCheck, grid: &[f64]) -> Result<ConditionReport> {
    let (grid, desc) = prepare(grid)?;
    if grid.len() < 2 {
        return Err(Error::Input("modulus check needs at least two grid points".into()));
    }
    let sigma: Vec<f64> = grid
        .iter()
        .map(|&x| finite(triple.diffusion.eval(x), "diffusion", x))
        .collect::<Result<_>>()?;
    let mut sweep = Sweep::new();
    match check {
        ModulusCheck::Rho(spec) => {
            if !spec.divergent {
                return Ok(fail_report(ConditionId::ModulusRho, desc, "modulus not admissible"));
            }
            for i in 0..grid.len() {
                for j in (i + 1)..grid.len() {
                    let lhs = (sigma[i] - sigma[j]).powi(2);
                    let rhs = spec.rho(grid[j] - grid[i]);
                    sweep.record(witness(vec![grid[i], grid[j]], lhs, rhs), 0.0);
                }
            }
            Ok(sweep.finish(ConditionId::ModulusRho, desc, None))
        }
        ModulusCheck::Monotone(f) => {
            let fv: Vec<f64> = grid.iter().map(|&x| finite(f.eval(x), "modulus f", x)).collect::<Result<_>>()?;
            for i in 1..grid.len() {
                if fv[i] < fv[i - 1] {
                    let mut rep = fail_report(ConditionId::ModulusMonotone, desc, "f is not nondecreasing");
                    rep.witness = Some(witness(vec![grid[i - 1], grid[i]], fv[i - 1], fv[i]));
                    return Ok(rep);
                }
            }
            for i in 0..grid.len() {
                for j in (i + 1)..grid.len() {
                    let lhs = (sigma[i] - sigma[j]).powi(2);
                    let rhs = (fv[i] - fv[j]).abs();
                    sweep.record(witness(vec![grid[i], grid[j]], lhs, rhs), 0.0);
                }
            }
            let sup = fv.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            Ok(sweep.finish(ConditionId::ModulusMonotone, desc, Some(format!("sup |f| on grid = {sup}"))))
        }
    }
}
