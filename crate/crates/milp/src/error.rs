use thiserror::Error;

use crate::model::VarId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MilpError {
    #[error("unknown variable {0}")]
    UnknownVariable(VarId),
    #[error("variable `{name}` has invalid bounds [{lower}, {upper}]")]
    InvertedBounds { name: String, lower: f64, upper: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("simplex iteration limit ({0}) reached")]
    IterationLimit(usize),
    #[error("linear relaxation is unbounded")]
    Unbounded,
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("unknown solver backend `{0}`")]
    UnknownBackend(String),
}
