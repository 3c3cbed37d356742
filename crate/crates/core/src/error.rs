use thiserror::Error;

/// Errors raised by the laboratory's evaluators and verifiers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("utility undefined for allocation value {value} and payment {payment}")]
    UtilityDomain { value: f64, payment: f64 },

    #[error("payment {payment} exceeds budget {budget}")]
    InfeasibleBudget { payment: f64, budget: f64 },

    #[error("negative variance {0} in lottery evaluation")]
    NegativeVariance(f64),

    #[error("expected {expected} actions, got {got}")]
    WrongArity { expected: usize, got: usize },

    #[error("negative bid {0}")]
    NegativeBid(f64),

    #[error("action {action} is not valid for {mechanism}")]
    InvalidAction { action: String, mechanism: String },

    #[error("allocation is not reachable for player {player} on the opponent grid")]
    AllocationUnreachable { player: usize },

    #[error("empty outcome space")]
    EmptyOutcomeSpace,

    #[error("conditioning event has zero probability")]
    ZeroProbabilityCondition,

    #[error("quadrature did not reach tolerance {tolerance} on [{lo}, {hi}]")]
    QuadratureBudget { lo: f64, hi: f64, tolerance: f64 },

    #[error("{name} {value} lies outside [{lo}, {hi}]")]
    OutOfRange { name: String, value: f64, lo: f64, hi: f64 },

    #[error("valuation class {0} is not closed under capping with budgets")]
    NotClosedUnderCapping(String),

    #[error("unsupported mechanism for this operation: {0}")]
    UnsupportedMechanism(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
