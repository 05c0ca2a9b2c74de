use thiserror::Error;

/// Errors raised by the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid market model: {0}")]
    InvalidModel(String),

    #[error("covariance matrix is not positive definite")]
    NonConvex,

    #[error("phi = {phi} is outside the admissible domain (> {floor})")]
    PhiOutOfDomain { phi: f64, floor: f64 },

    #[error("quadratic program did not converge after {0} iterations")]
    QpNotConverged(usize),

    #[error("alpha table is not strictly increasing between phi = {lo} and phi = {hi}")]
    TableMonotonicityViolation { lo: f64, hi: f64 },

    #[error("terminal utility is not increasing at x = {0}")]
    NonIncreasingUtility(f64),

    #[error("b became non-positive at time layer {0}")]
    NonpositiveB(usize),

    #[error("non-finite values after time step {0}")]
    NonFinite(usize),

    #[error("zero pivot in tridiagonal solve at row {0}")]
    ZeroPivot(usize),

    #[error("value function is not increasing in x at tau = {0}")]
    MonotonicityViolation(f64),

    #[error("error norms must be positive for EOC estimation")]
    NonpositiveError,

    #[error("sample covariance is singular; try a shrinkage factor > 0")]
    SingularCovariance,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed table: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
