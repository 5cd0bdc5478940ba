use thiserror::Error;

use crate::model::{ConstraintMode, Player};

/// Errors produced by game construction, solving and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point {x} is outside the state space ({lo}, {hi})")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("eps = {eps} is not above the admissible lower bound {bound}; no root above one exists")]
    NoRootAboveOne { eps: f64, bound: f64 },

    #[error("terminal payoff must be zero, got {value}")]
    NonzeroTerminalPayoff { value: f64 },

    #[error("invalid grid configuration: {0}")]
    GridConfig(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (last change {last_change:.3e})")]
    NonConvergence { iterations: u32, last_change: f64 },

    #[error("tridiagonal system is singular near row {row}")]
    SingularSystem { row: usize },

    #[error("expected a {expected:?}-mode input, got {got:?}")]
    ModeMismatch {
        expected: ConstraintMode,
        got: ConstraintMode,
    },

    #[error("strategy role mismatch: expected {expected:?}, got {got:?}")]
    RoleMismatch { expected: Player, got: Player },

    #[error("stopping sets must be disjoint, found overlap near {witness}")]
    OverlappingSets { witness: f64 },

    #[error("malformed piecewise function: {0}")]
    BadFunctionSpec(String),
}

pub type Result<T> = std::result::Result<T, Error>;
