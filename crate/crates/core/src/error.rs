use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: expected {expected_width}x{expected_height}, got {got_width}x{got_height}")]
    ShapeMismatch {
        expected_width: usize,
        expected_height: usize,
        got_width: usize,
        got_height: usize,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("ill-conditioned covariance: {0}; retry with a positive shrinkage weight")]
    IllConditionedCovariance(String),

    #[error("degenerate test-statistic variance: {0}")]
    DegenerateVariance(String),

    #[error("objective diverged at iteration {iteration}: {objective:e} exceeds 1e6x the initial value")]
    Divergence { iteration: usize, objective: f64 },
}

impl Error {
    pub(crate) fn shape(expected: (usize, usize), got: (usize, usize)) -> Self {
        Error::ShapeMismatch {
            expected_width: expected.0,
            expected_height: expected.1,
            got_width: got.0,
            got_height: got.1,
        }
    }
}
