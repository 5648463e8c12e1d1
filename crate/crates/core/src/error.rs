use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("non-finite entry produced by {op}")]
    NonFinite { op: &'static str },

    #[error("dense factorization failed: {0}")]
    Factorization(#[from] ndarray_linalg::error::LinalgError),

    #[error("matrix is rank-deficient (|r[{index},{index}]| = {value:.3e})")]
    RankDeficient { index: usize, value: f64 },

    #[error(
        "eigensolver did not converge: {converged}/{requested} pairs, worst residual {residual:.3e}"
    )]
    EigsNoConvergence {
        requested: usize,
        converged: usize,
        residual: f64,
    },

    #[error("linear solve did not converge: residual {residual:.3e} after {iterations} iterations")]
    SolveNoConvergence { residual: f64, iterations: usize },

    #[error("degenerate transfer spectrum: |lambda2/lambda1| = {ratio} within tolerance of 1")]
    DegenerateTransfer { ratio: f64 },

    #[error("trajectory annihilates the state (dominant transfer weight {weight:.3e})")]
    TrajectoryAnnihilated { weight: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ground-state solver failed: {0}")]
    Solver(String),

    #[error("checkpoint i/o: {0}")]
    CheckpointIo(#[from] std::io::Error),

    #[error("checkpoint format: {0}")]
    CheckpointFormat(String),

    #[error("fit rejected: {0}")]
    Fit(String),

    #[error("bracket does not enclose peak (maximum at edge K = {at_edge})")]
    BracketEdge { at_edge: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
