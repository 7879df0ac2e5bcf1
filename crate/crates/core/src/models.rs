//! Named models used by the experiments and the command line.

use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientTriple, IntensityMeasure, JumpKernel, ScalarFn};
use crate::error::{Error, Result};
use crate::risk::{build_refracted, RefractedParams};

/// A triple together with its jump measure and initial value.
#[derive(Clone, Debug)]
pub struct Model {
    pub name: String,
    pub triple: CoefficientTriple,
    pub measure: IntensityMeasure,
    pub x0: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    /// The refracted risk model with its default parameters.
    Refracted,
    /// `b = 0, sigma = 1, g = 0`.
    Brownian,
    /// Smooth bounded coefficients `b = 1 + sin(x)/2`, `sigma = 1 + cos(x)/2`, no jumps.
    LipschitzControl,
    /// `b = sigma = g = 0`.
    Zero,
    /// Refracted drift and volatility with the reflecting kernel `g = -2x 1{u<0}`.
    Counterexample,
    /// `sigma = 1{x>=0}`, the fixture for the linear modulus check.
    StepSigma,
}

impl Builtin {
    pub const ALL: [Builtin; 6] = [
        Builtin::Refracted,
        Builtin::Brownian,
        Builtin::LipschitzControl,
        Builtin::Zero,
        Builtin::Counterexample,
        Builtin::StepSigma,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Builtin::Refracted => "refracted",
            Builtin::Brownian => "brownian",
            Builtin::LipschitzControl => "lipschitz_control",
            Builtin::Zero => "zero",
            Builtin::Counterexample => "counterexample",
            Builtin::StepSigma => "step_sigma",
        }
    }

    pub fn parse(name: &str) -> Result<Builtin> {
        Builtin::ALL
            .into_iter()
            .find(|b| b.as_str() == name)
            .ok_or_else(|| Error::Configuration(format!("unknown builtin model `{name}`")))
    }

    pub fn model(self) -> Model {
        let (triple, measure, x0) = match self {
            Builtin::Refracted => {
                let params = RefractedParams::default();
                let triple = build_refracted(&params).expect("default parameters are valid");
                (triple, params.claims, 1.5)
            }
            Builtin::Brownian => (CoefficientTriple::constant(0.0, 1.0), IntensityMeasure::zero(), 0.0),
            Builtin::LipschitzControl => (
                CoefficientTriple::new(
                    ScalarFn::new("1+sin(x)/2", |x| 1.0 + 0.5 * x.sin()),
                    ScalarFn::new("1+cos(x)/2", |x| 1.0 + 0.5 * x.cos()),
                    JumpKernel::zero(),
                )
                .with_bounds(2.25 + 2.25, 0.5),
                IntensityMeasure::zero(),
                0.0,
            ),
            Builtin::Zero => (CoefficientTriple::constant(0.0, 0.0), IntensityMeasure::zero(), 0.0),
            Builtin::Counterexample => {
                let params = RefractedParams::default();
                let triple = build_refracted(&params)
                    .expect("default parameters are valid")
                    .with_jump(JumpKernel::reflecting());
                (triple, params.claims, 1.5)
            }
            Builtin::StepSigma => (
                CoefficientTriple::new(ScalarFn::constant(0.0), ScalarFn::step(0.0, 0.0, 1.0), JumpKernel::zero())
                    .with_discontinuities(vec![0.0])
                    .with_bounds(1.0, 0.0),
                IntensityMeasure::zero(),
                0.0,
            ),
        };
        Model { name: self.as_str().to_string(), triple, measure, x0 }
    }
}
