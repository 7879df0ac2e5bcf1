use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Offset used to read left limits at declared breakpoints.
const LEFT_OFFSET: f64 = 1e-10;

/// A bounded real function of one variable with a descriptive label.
///
/// Tables are right-continuous at their knots.
#[derive(Clone)]
pub struct ScalarFn {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    label: String,
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarFn({})", self.label)
    }
}

impl ScalarFn {
    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(f),
            label: label.into(),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("const({c})"), move |_| c)
    }

    /// `below` for `x < at`, `above` for `x >= at`.
    pub fn step(at: f64, below: f64, above: f64) -> Self {
        Self::new(format!("step({at};{below},{above})"), move |x| {
            if x >= at {
                above
            } else {
                below
            }
        })
    }

    /// Piecewise-constant table: `values[j]` holds on `[knots[j-1], knots[j])`,
    /// so `values.len() == knots.len() + 1`.
    pub fn piecewise_constant(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != knots.len() + 1 {
            return Err(Error::Input(format!(
                "piecewise-constant table needs {} values for {} knots, got {}",
                knots.len() + 1,
                knots.len(),
                values.len()
            )));
        }
        check_sorted(&knots)?;
        let label = format!("pc({knots:?};{values:?})");
        Ok(Self::new(label, move |x| {
            let j = knots.partition_point(|&k| k <= x);
            values[j]
        }))
    }

    /// Piecewise-linear interpolation through `(knots[i], values[i])`, held
    /// constant outside the knot range.
    pub fn piecewise_linear(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != knots.len() || knots.is_empty() {
            return Err(Error::Input(
                "piecewise-linear table needs matching nonempty knots and values".into(),
            ));
        }
        check_sorted(&knots)?;
        let label = format!("pl({knots:?};{values:?})");
        Ok(Self::new(label, move |x| {
            let n = knots.len();
            if x <= knots[0] {
                return values[0];
            }
            if x >= knots[n - 1] {
                return values[n - 1];
            }
            let j = knots.partition_point(|&k| k <= x);
            let (x0, x1) = (knots[j - 1], knots[j]);
            let (y0, y1) = (values[j - 1], values[j]);
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        }))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    /// Numerical left limit, exact for piecewise-constant functions.
    pub fn left_limit(&self, x: f64) -> f64 {
        self.eval(x - LEFT_OFFSET * x.abs().max(1.0))
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

fn check_sorted(knots: &[f64]) -> Result<()> {
    if knots.windows(2).any(|w| w[0] >= w[1]) || knots.iter().any(|k| !k.is_finite()) {
        return Err(Error::Input("table knots must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// A jump kernel `g(x, u)`.
#[derive(Clone)]
pub struct JumpKernel {
    g: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    label: String,
    state_free: bool,
}

impl fmt::Debug for JumpKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "JumpKernel({})", self.label)
    }
}

impl JumpKernel {
    pub fn new(
        label: impl Into<String>,
        g: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            g: Arc::new(g),
            label: label.into(),
            state_free: false,
        }
    }

    pub fn zero() -> Self {
        Self {
            g: Arc::new(|_, _| 0.0),
            label: "zero".into(),
            state_free: true,
        }
    }

    /// `g(x, u) = u`: the jump equals the mark.
    pub fn additive() -> Self {
        Self {
            g: Arc::new(|_, u| u),
            label: "additive".into(),
            state_free: true,
        }
    }

    /// `g(x, u) = c(x) * u`.
    pub fn scaled(c: ScalarFn) -> Self {
        let label = format!("scaled({})", c.label());
        Self::new(label, move |x, u| c.eval(x) * u)
    }

    /// `g(x, u) = -2x` for negative marks, 0 otherwise. Violates the
    /// monotonicity of `x + g(x, u)`.
    pub fn reflecting() -> Self {
        Self::new("reflecting", |x, u| if u < 0.0 { -2.0 * x } else { 0.0 })
    }

    #[inline]
    pub fn eval(&self, x: f64, u: f64) -> f64 {
        (self.g)(x, u)
    }

    pub fn left_limit(&self, x: f64, u: f64) -> f64 {
        self.eval(x - LEFT_OFFSET * x.abs().max(1.0), u)
    }

    /// True when `g` does not depend on the state.
    pub fn is_state_free(&self) -> bool {
        self.state_free
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}
