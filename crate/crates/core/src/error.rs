use thiserror::Error;

use crate::model::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {}", format_violations(.0))]
    InvalidModel(Vec<Violation>),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("size guard exceeded: {what} = {size} > {limit}")]
    SizeGuard {
        what: &'static str,
        size: u128,
        limit: u128,
    },

    #[error("not a layered sequential model: {0}")]
    NotLayered(String),

    #[error("not a one-step matrix game: {0}")]
    NotMatrixGame(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite loss {value} at step {step}")]
    NonFinite { step: usize, value: f64 },

    #[error("singular linear system while evaluating policy")]
    Singular,

    #[error("unknown environment `{0}`")]
    UnknownEnv(String),

    #[error("environment file: {0}")]
    EnvFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
