use sha2::{Digest, Sha256};

use super::functions::{JumpKernel, ScalarFn};

/// The coefficients of the drift/diffusion/jump equation, seen by the solvers.
pub trait Dynamics: Send + Sync {
    fn drift(&self, x: f64) -> f64;
    fn diffusion(&self, x: f64) -> f64;
    fn jump(&self, x: f64, u: f64) -> f64;

    /// Mollification level, `None` for raw coefficients.
    fn level(&self) -> Option<u32> {
        None
    }

    fn fingerprint(&self) -> String;
}

/// Coefficients `(b, sigma, g)` with the discontinuities they declare inside the
/// simulation window and the constants `K` and `sigma_0` used by the condition
/// checks (`sigma_0 = 0` when unknown).
#[derive(Clone, Debug)]
pub struct CoefficientTriple {
    pub drift: ScalarFn,
    pub diffusion: ScalarFn,
    pub jump: JumpKernel,
    pub discontinuities: Vec<f64>,
    pub bound_k: f64,
    pub sigma_lower: f64,
    /// Nondecreasing bounded `f` with `|sigma(x) - sigma(y)|^2 <= |f(x) - f(y)|`,
    /// when the model supplies one.
    pub modulus: Option<ScalarFn>,
}

impl CoefficientTriple {
    pub fn new(drift: ScalarFn, diffusion: ScalarFn, jump: JumpKernel) -> Self {
        Self {
            drift,
            diffusion,
            jump,
            discontinuities: Vec::new(),
            bound_k: 0.0,
            sigma_lower: 0.0,
            modulus: None,
        }
    }

    pub fn constant(b: f64, sigma: f64) -> Self {
        let s = sigma.abs();
        Self::new(ScalarFn::constant(b), ScalarFn::constant(sigma), JumpKernel::zero())
            .with_bounds(b * b + sigma * sigma, s)
    }

    /// Sorted, deduplicated breakpoints.
    pub fn with_discontinuities(mut self, mut points: Vec<f64>) -> Self {
        points.sort_by(f64::total_cmp);
        points.dedup();
        self.discontinuities = points;
        self
    }

    pub fn with_bounds(mut self, bound_k: f64, sigma_lower: f64) -> Self {
        self.bound_k = bound_k;
        self.sigma_lower = sigma_lower;
        self
    }

    pub fn with_modulus(mut self, f: ScalarFn) -> Self {
        self.modulus = Some(f);
        self
    }

    pub fn with_jump(mut self, jump: JumpKernel) -> Self {
        self.jump = jump;
        self
    }
}

impl Dynamics for CoefficientTriple {
    #[inline]
    fn drift(&self, x: f64) -> f64 {
        self.drift.eval(x)
    }
    #[inline]
    fn diffusion(&self, x: f64) -> f64 {
        self.diffusion.eval(x)
    }
    #[inline]
    fn jump(&self, x: f64, u: f64) -> f64 {
        self.jump.eval(x, u)
    }

    fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.drift.label());
        h.update("|");
        h.update(self.diffusion.label());
        h.update("|");
        h.update(self.jump.label());
        h.update(format!("|{:?}|{}|{}", self.discontinuities, self.bound_k, self.sigma_lower));
        hex::encode(&h.finalize()[..8])
    }
}
