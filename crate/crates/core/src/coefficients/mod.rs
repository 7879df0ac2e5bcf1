//! Coefficient triples, intensity measures, condition checks and mollification.

mod conditions;
mod functions;
mod measure;
mod mollify;
pub mod quadrature;
mod triple;

pub use conditions::{
    check_condition, check_grid, check_modulus, ConditionId, ConditionReport, GridDescriptor, ModulusCheck,
    ModulusKind, ModulusSpec, Verdict, Witness,
};
pub use functions::{JumpKernel, ScalarFn};
pub use measure::{Atom, ContinuousPart, IntensityMeasure, Integral, Side};
pub use mollify::{mollify, Mollified, MollifiedKernel, MollifiedTriple, DEFAULT_ORDER};
pub use triple::{CoefficientTriple, Dynamics};
