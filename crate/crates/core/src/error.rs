use alloc::string::String;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid pull request {pr_id}: {reason}")]
    InvalidRecord { pr_id: String, reason: &'static str },
    #[error("as_of {as_of} precedes creation time {created_at}")]
    ClockSkew { created_at: i64, as_of: i64 },
    #[error("duplicate pr_id {0}")]
    DuplicatePr(String),
    #[error("log transform undefined for negative input {0}")]
    NegativeInput(f64),
    #[error("gini impurity of an empty node")]
    EmptyNode,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("no out-of-bag rows available; use a larger sample")]
    NoOutOfBag,
    #[error("training data does not match the model fingerprint")]
    FingerprintMismatch,
    #[error("AUC is undefined when only one class is present")]
    UndefinedAuc,
    #[error("kappa is undefined when chance agreement equals 1")]
    UndefinedKappa,
    #[error("{0} is undefined: zero denominator")]
    UndefinedRate(&'static str),
    #[error("degenerate split: {0} side is empty")]
    DegenerateSplit(&'static str),
    #[error("unknown feature {0}")]
    UnknownFeature(String),
}
