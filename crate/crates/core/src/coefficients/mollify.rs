//! Gaussian mollification `f_n(x) = E f(x + xi_n)`, `xi_n ~ N(0, 1/n)`.
//!
//! Jumps at declared breakpoints are split off and integrated in closed form
//! through the normal CDF; the continuous remainder goes through Gauss–Hermite.
//! A step function is therefore mollified exactly.

use std::sync::Arc;

use super::functions::{JumpKernel, ScalarFn};
use super::quadrature::GaussHermite;
use super::triple::{CoefficientTriple, Dynamics};
use crate::error::{Error, Result};
use crate::stats::{normal_cdf, normal_pdf};

pub const DEFAULT_ORDER: usize = 24;

fn check_level(n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::Configuration("mollification level n must be at least 1".into()));
    }
    Ok(1.0 / (n as f64).sqrt())
}

/// Smooth approximation of a scalar coefficient.
#[derive(Clone, Debug)]
pub struct Mollified {
    base: ScalarFn,
    /// (breakpoint, jump size f(d) - f(d-))
    jumps: Vec<(f64, f64)>,
    rule: Arc<GaussHermite>,
    scale: f64,
}

/// Mollify `f` at level `n` with a Gauss–Hermite rule of the given order.
pub fn mollify(f: &ScalarFn, breakpoints: &[f64], n: u32, order: usize) -> Result<Mollified> {
    let rule = Arc::new(GaussHermite::new(order)?);
    mollify_with(f, breakpoints, n, rule)
}

fn mollify_with(f: &ScalarFn, breakpoints: &[f64], n: u32, rule: Arc<GaussHermite>) -> Result<Mollified> {
    let scale = check_level(n)?;
    let mut jumps = Vec::with_capacity(breakpoints.len());
    for &d in breakpoints {
        let size = f.eval(d) - f.left_limit(d);
        if !size.is_finite() {
            return Err(Error::Evaluation { what: "coefficient", point: d });
        }
        if size != 0.0 {
            jumps.push((d, size));
        }
    }
    Ok(Mollified {
        base: f.clone(),
        jumps,
        rule,
        scale,
    })
}

impl Mollified {
    #[inline]
    fn continuous_part(&self, y: f64) -> f64 {
        let mut v = self.base.eval(y);
        for &(d, j) in &self.jumps {
            if y >= d {
                v -= j;
            }
        }
        v
    }

    pub fn value(&self, x: f64) -> f64 {
        let mut s = 0.0;
        for (z, w) in self.rule.nodes.iter().zip(&self.rule.weights) {
            s += w * self.continuous_part(x + self.scale * z);
        }
        for &(d, j) in &self.jumps {
            s += j * normal_cdf((x - d) / self.scale);
        }
        s
    }

    /// `d/dx E f(x + xi) = E[f(x + xi) xi] n`, plus the closed-form jump densities.
    pub fn derivative(&self, x: f64) -> f64 {
        let mut s = 0.0;
        for (z, w) in self.rule.nodes.iter().zip(&self.rule.weights) {
            s += w * z * self.continuous_part(x + self.scale * z);
        }
        s /= self.scale;
        for &(d, j) in &self.jumps {
            s += j * normal_pdf((x - d) / self.scale) / self.scale;
        }
        s
    }
}

/// Slice-wise mollification of a jump kernel, `g_n(x, u) = E g(x + xi_n, u)`.
#[derive(Clone, Debug)]
pub struct MollifiedKernel {
    base: JumpKernel,
    breakpoints: Vec<f64>,
    rule: Arc<GaussHermite>,
    scale: f64,
}

impl MollifiedKernel {
    pub fn new(g: &JumpKernel, breakpoints: &[f64], n: u32, order: usize) -> Result<Self> {
        Ok(Self {
            base: g.clone(),
            breakpoints: breakpoints.to_vec(),
            rule: Arc::new(GaussHermite::new(order)?),
            scale: check_level(n)?,
        })
    }

    pub fn value(&self, x: f64, u: f64) -> f64 {
        if self.base.is_state_free() {
            return self.base.eval(x, u);
        }
        let jumps: Vec<(f64, f64)> = self
            .breakpoints
            .iter()
            .map(|&d| (d, self.base.eval(d, u) - self.base.left_limit(d, u)))
            .filter(|&(_, j)| j != 0.0)
            .collect();
        let cont = |y: f64| {
            let mut v = self.base.eval(y, u);
            for &(d, j) in &jumps {
                if y >= d {
                    v -= j;
                }
            }
            v
        };
        let mut s = 0.0;
        for (z, w) in self.rule.nodes.iter().zip(&self.rule.weights) {
            s += w * cont(x + self.scale * z);
        }
        for &(d, j) in &jumps {
            s += j * normal_cdf((x - d) / self.scale);
        }
        s
    }
}

/// The mollified triple `(b_n, sigma_n, g_n)`.
#[derive(Clone, Debug)]
pub struct MollifiedTriple {
    pub drift: Mollified,
    pub diffusion: Mollified,
    pub jump: MollifiedKernel,
    level: u32,
    fingerprint: String,
}

impl MollifiedTriple {
    pub fn new(triple: &CoefficientTriple, n: u32, order: usize) -> Result<Self> {
        let rule = Arc::new(GaussHermite::new(order)?);
        let d = &triple.discontinuities;
        Ok(Self {
            drift: mollify_with(&triple.drift, d, n, rule.clone())?,
            diffusion: mollify_with(&triple.diffusion, d, n, rule.clone())?,
            jump: MollifiedKernel {
                base: triple.jump.clone(),
                breakpoints: d.clone(),
                rule,
                scale: check_level(n)?,
            },
            level: n,
            fingerprint: format!("{}@n{}q{}", triple.fingerprint(), n, order),
        })
    }
}

impl Dynamics for MollifiedTriple {
    #[inline]
    fn drift(&self, x: f64) -> f64 {
        self.drift.value(x)
    }
    #[inline]
    fn diffusion(&self, x: f64) -> f64 {
        self.diffusion.value(x)
    }
    #[inline]
    fn jump(&self, x: f64, u: f64) -> f64 {
        self.jump.value(x, u)
    }
    fn level(&self) -> Option<u32> {
        Some(self.level)
    }
    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }
}
