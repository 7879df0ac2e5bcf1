use thiserror::Error;

/// Errors raised by the simulation and verification engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("measure error: {0}")]
    Measure(String),
    #[error("non-finite {what} at x = {point}")]
    Evaluation { what: &'static str, point: f64 },
    #[error("solution diverged at t = {time} (value {value})")]
    Diverged { time: f64, value: f64 },
    #[error("degenerate diffusion sigma(x) = 0 at t = {time}, x = {state}")]
    Degenerate { time: f64, state: f64 },
    #[error("precondition not met: {0}")]
    Precondition(String),
    #[error("underpowered experiment: {n} paths, need at least {min}")]
    Underpowered { n: usize, min: usize },
    #[error("malformed noise dump: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
