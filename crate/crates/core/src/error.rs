use thiserror::Error;

use crate::graph::{EdgeId, VertexId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown edge id {0}")]
    UnknownEdge(EdgeId),

    #[error("unknown vertex id {0}")]
    UnknownVertex(VertexId),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// The combined cost `t(e) + w(e)` of an edge is negative, which would
    /// invalidate label-setting search.
    #[error("negative combined cost {cost} on edge {edge} (constraints {constraints:?})")]
    NegativeEdgeCost {
        edge: EdgeId,
        cost: f64,
        constraints: Vec<u32>,
    },

    #[error("no path from {start} to {goal}")]
    Unreachable { start: VertexId, goal: VertexId },

    #[error("instance too large: more than {limit} start-goal paths")]
    InstanceTooLarge { limit: usize },

    #[error("degenerate halfspace: paths have identical violations and time")]
    DegenerateHalfspace,

    #[error("nothing to ask: fewer than two live regions")]
    NothingToAsk,

    #[error("all regions contradicted by feedback; posterior undefined")]
    PosteriorCollapse,

    #[error("no pending query")]
    NoPendingQuery,

    #[error("budget exhausted after {0} iterations")]
    BudgetExhausted(usize),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid scenario: {0}")]
    Schema(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        use serde_json::error::Category;
        match err.classify() {
            Category::Io => Error::Io(err.into()),
            Category::Data => Error::Schema(err.to_string()),
            Category::Syntax | Category::Eof => Error::Parse {
                line: err.line(),
                column: err.column(),
                message: err.to_string(),
            },
        }
    }
}
