use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A closed-form quantity was evaluated at a point where it is undefined
    /// (zero rate, zero frequency, the `theta -> 1` pole).
    #[error("infeasible evaluation: {0}")]
    InfeasibleEvaluation(String),

    /// No strictly feasible operating point exists for this realization.
    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),

    #[error("solver failure: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
