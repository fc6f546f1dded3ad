//! Exact rational optimization kernel: Gaussian elimination, a two-phase
//! simplex with Bland's rule, and branch-and-bound over binary variables.
//!
//! Every number is an arbitrary-precision rational; nothing is rounded.

pub mod format;
pub mod linsys;
pub mod lp;
pub mod milp;
pub mod rational;

pub use format::{milp_from_json, milp_to_json, milp_to_lp_format};
pub use linsys::{solve_linear_system, LinearSolution};
pub use lp::{lp_solve, Constraint, LinearProgram, LpOutcome, LpSolution, Relation, Sense, Variable};
pub use milp::{milp_solve, Indicator, MilpModel, MilpOutcome, MilpStats};
pub use rational::{q, qi, Q};

use thiserror::Error;

/// Errors raised by the optimization kernel.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("malformed model: {0}")]
    Format(String),
    #[error(transparent)]
    Denominator(#[from] rational::DenominatorLimitExceeded),
}
