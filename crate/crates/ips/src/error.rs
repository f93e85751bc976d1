use thiserror::Error;

use crate::graph::VertexId;

#[derive(Debug, Error)]
pub enum IpsError {
    #[error("graph has no root")]
    NoRoot,
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("vertex budget exceeded (budget {budget})")]
    BudgetExceeded { budget: usize },
    #[error("ball has {size} vertices, over the canonicalization cap {cap}")]
    TooLarge { size: usize, cap: usize },
    #[error("offspring distribution has zero mean")]
    ZeroMean,
    #[error("degree sum is odd")]
    OddDegreeSum,
    #[error("mark {value} at vertex/edge exceeds its cap {cap}")]
    MarkOutOfRange { value: f64, cap: f64 },
    #[error("hazard value {value} at s={arg} exceeds its declared cap {cap}")]
    UnboundedHazard { value: f64, cap: f64, arg: f64 },
    #[error("window ({t1}, {t2}] not contained in (0, {horizon}]")]
    WindowOutOfRange { t1: f64, t2: f64, horizon: f64 },
    #[error("jump {jump} at vertex {vertex} leaves the state space with positive rate")]
    StateEscape { vertex: VertexId, jump: i64 },
    #[error("graph is lazy/unbounded; a finite graph is required")]
    NonFinite,
    #[error("model is not Markov; the master-equation oracle does not apply")]
    NotMarkov,
    #[error("product state space has {size} states, over the oracle cap {cap}")]
    StateSpaceTooLarge { size: usize, cap: usize },
    #[error("influence-set budget exhausted")]
    Exhausted,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, IpsError>;
