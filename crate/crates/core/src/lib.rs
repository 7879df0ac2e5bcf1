//! Simulation and empirical verification for one-dimensional SDEs driven by a
//! Brownian motion and a finite-variation pure-jump Lévy process, with
//! coefficients that may be discontinuous.

pub mod batch;
pub mod coefficients;
pub mod error;
pub mod lab;
pub mod localtime;
pub mod models;
pub mod noise;
pub mod risk;
pub mod solver;
pub mod stats;
pub mod timechange;

pub use error::{Error, Result};
