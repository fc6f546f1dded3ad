//! Structural errors shared by every module.
//!
//! Verdicts (a query fails, a certificate is rejected) are ordinary return
//! values; `Error` is reserved for inputs that cannot be processed at all.

use certimdp_opt::rational::DenominatorLimitExceeded;
use certimdp_opt::OptError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("model: {0}")]
    Model(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("automaton: {0}")]
    Automaton(String),
    #[error("query: {0}")]
    Query(String),
    #[error("limit exceeded: {0}")]
    Limit(String),
    #[error("schema: {0}")]
    Schema(String),
    #[error("reachability form: {0}")]
    ReachForm(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Opt(#[from] OptError),
    #[error(transparent)]
    Denominator(#[from] DenominatorLimitExceeded),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn model_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Model(msg.into()))
}
