use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not square: {rows} x {cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("infeasible Loewner bounds: lower bound is not below upper bound")]
    InfeasibleBounds,

    #[error("projection did not converge after {iterations} iterations (last change {change:e})")]
    ProjectionNotConverged { iterations: usize, change: f64 },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("unknown edge `{0}`")]
    UnknownEdge(String),

    #[error("graph is disconnected")]
    Disconnected,

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("graph is not series-parallel between `{source_node}` and `{sink}`: {detail}")]
    NotSeriesParallel {
        source_node: String,
        sink: String,
        detail: String,
    },

    #[error("inconsistent electrical solution: {0}")]
    Inconsistent(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no decomposition tree for source `{0}`")]
    MissingTree(String),
}
