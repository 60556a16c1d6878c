use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("Fock index {index} out of range for truncation dim {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("invalid truncation dimension {0} (need at least 2)")]
    InvalidDimension(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(
        "truncation leak: completeness defect {defect:.3e} on occupied subspace (n <= {occupied})"
    )]
    TruncationLeak { defect: f64, occupied: usize },

    #[error("loss order {j} is not correctable for code ({m}, {n})")]
    Uncorrectable { m: usize, n: usize, j: usize },

    #[error("exact branching over {rounds} rounds exceeds the limit of {limit}")]
    BranchExplosion { rounds: usize, limit: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("degenerate binomial: offset A = {0}")]
    DegenerateBinomial(f64),

    #[error("class {j} outcome {label} has non-positive offset {a} with contrast {b}")]
    EmptyClassWithSignal {
        j: usize,
        label: char,
        a: f64,
        b: f64,
    },

    #[error("evaluation failed at {params}: {source}")]
    Evaluation { params: String, source: Box<Error> },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
