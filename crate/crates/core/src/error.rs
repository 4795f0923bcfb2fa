use thiserror::Error;

/// Errors produced across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid metric parameters: {0}")]
    InvalidMetric(String),

    #[error("zero eigenvalue in the {0} subspace, inverse is undefined")]
    SingularMetric(&'static str),

    #[error("model mode mismatch: {0}")]
    ModeMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("degenerate geometry: {0}")]
    Geometry(String),

    #[error("inverted element {elem}: non-positive Jacobian at Gauss point {point}")]
    InvertedElement { elem: usize, point: usize },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("invalid boundary program: {0}")]
    Program(String),

    #[error("constraint conflict: {0}")]
    Constraint(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("empty support: no lattice joint within the support radius of node {0}")]
    EmptySupport(usize),

    #[error("row {row} unavailable in mode {mode}")]
    RowUnavailable { row: String, mode: String },

    #[error("{0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of a numerical solve, as opposed to bad user input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(self, Error::Singular(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
