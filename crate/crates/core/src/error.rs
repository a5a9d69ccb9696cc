use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),

    /// `row` counts data rows from 1, header excluded.
    #[error("cannot parse value at row {row}, column `{col}`")]
    ParseError { row: usize, col: String },

    #[error("too few rows: n = {n}, need at least {required} for {p} covariate(s)")]
    TooFewRows { n: usize, p: usize, required: usize },

    #[error("non-finite value in `{col}` at row {row}")]
    NonFinite { row: usize, col: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("stratum {0} has fewer than 3 units")]
    EmptyStratum(usize),

    #[error("matrix is singular or not positive definite (rcond ~ {rcond:.3e})")]
    SingularMatrix { rcond: f64 },

    #[error("variance must be positive, got {0}")]
    NonPositiveVariance(f64),

    /// `None` for the whole sample, `Some(l)` for stratum `l` (1-based).
    #[error("exposure has zero variance{}", .0.map(|l| format!(" in stratum {l}")).unwrap_or_default())]
    ZeroExposureVariance(Option<usize>),

    #[error("degenerate propensity fit: {0}")]
    DegenerateFit(String),

    #[error("empty input")]
    EmptyInput,

    #[error("bootstrap degenerate: {failed} of {requested} replicates failed")]
    BootstrapDegenerate { failed: usize, requested: usize },

    #[error("empirical standard deviation is zero")]
    DegenerateEmpiricalSd,

    #[error("method `{method}` failed on {failed} of {total} replicates")]
    TooManyFailures {
        method: String,
        failed: usize,
        total: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
