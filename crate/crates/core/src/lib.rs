//! Solver, simulator and verification toolkit for perpetual zero-sum Dynkin
//! games in which both players may stop only at event times of Poisson signal
//! processes.
//!
//! Two constraint regimes are covered: a single signal process shared by both
//! players (`common`) and one private process per player at the same rate
//! (`independent`). The crates provide
//!
//! * exact closed forms for a Brownian benchmark game and the payoff
//!   modification under which the two regimes diverge ([`closed_form`]),
//! * a grid fixed-point solver for the stationary equations of either regime
//!   with stopping-set extraction ([`solver`]),
//! * finite-horizon truncations of the backward equation and a one-signal
//!   dynamic-programming check ([`bsde`]),
//! * path-level simulation: signal streams, hitting strategies, a coupling
//!   check for the two-colour thinning identity, and a saddle-point deviation
//!   battery ([`monte_carlo`]),
//! * transfer checks between the two regimes ([`equivalence`]).

pub mod bsde;
pub mod closed_form;
pub mod equivalence;
mod error;
pub mod model;
pub mod monte_carlo;
pub mod solver;

pub use error::{Error, Result};
