use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix must be square with at least one row, got {rows} rows of lengths {detail}")]
    BadShape { rows: usize, detail: String },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not symmetric: |a[{i}][{j}] - a[{j}][{i}]| = {gap:e}")]
    NotSymmetric { i: usize, j: usize, gap: f64 },
    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("matrix is singular (pivot magnitude {pivot:e} at column {col})")]
    Singular { col: usize, pivot: f64 },
    #[error("bad index set {indices:?} for dimension {n}")]
    BadIndexSet { indices: Vec<usize>, n: usize },
    #[error("dimension {n} exceeds the supported maximum {max}")]
    DimensionTooLarge { n: usize, max: usize },
    #[error("traffic slackness component {index} is {value:e}, must be positive")]
    NotPositiveSlackness { index: usize, value: f64 },
    #[error("scaling parameter r = {0} must lie in (0, 1)")]
    BadScale(f64),
    #[error("leading principal block of order {order} is singular")]
    SingularPrincipalBlock { order: usize },
    #[error("u_k'R[:, k] = {value:e} for component {k}, must be positive")]
    NonpositiveSchur { k: usize, value: f64 },
    #[error("diagonal entry {index} of {which} is {value}, must be positive")]
    NonpositiveDiagonal {
        which: &'static str,
        index: usize,
        value: f64,
    },
    #[error("component index {k} out of range for dimension {d}")]
    BadComponent { k: usize, d: usize },
    #[error("eta must be componentwise nonpositive, entry {index} is {value}")]
    BadEta { index: usize, value: f64 },
    #[error("theta must be componentwise nonpositive here, entry {index} is {value}")]
    PositiveTheta { index: usize, value: f64 },
    #[error("linear complementarity problem has no solution")]
    NoSolution,
    #[error("linear complementarity problem has {count} distinct solutions")]
    NonUnique { count: usize },
    #[error("initial state has negative component {index}: {value}")]
    BadInit { index: usize, value: f64 },
    #[error("exponential means must be positive, entry {index} is {value}")]
    BadMeans { index: usize, value: f64 },
    #[error("estimation window is empty: {0}")]
    EmptyWindow(String),
    #[error("slackness of face {face} is {value}, boundary measure undefined")]
    ZeroSlackness { face: usize, value: f64 },
    #[error("invalid simulation parameters: {0}")]
    BadSimulation(String),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of the numerics (singular systems, LCP breakdown)
    /// rather than of the caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::Singular { .. }
                | Error::SingularPrincipalBlock { .. }
                | Error::NonpositiveSchur { .. }
                | Error::NoSolution
                | Error::NonUnique { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
