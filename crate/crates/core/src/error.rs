use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("not orthonormal: max |XᴴX - I| = {deviation:e}")]
    NotOrthonormal { deviation: f64 },

    #[error("integer overflow while computing {0}")]
    Overflow(&'static str),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("degenerate pair ({0}, {1}): the two points span the same subspace")]
    DegeneratePair(usize, usize),

    #[error("pole in determinant factor: 1 - α²σ⁴sin²θ = 0")]
    Pole,

    #[error("codeword {codeword} row {row} has more than one nonzero entry")]
    NotSparse { codeword: usize, row: usize },

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
