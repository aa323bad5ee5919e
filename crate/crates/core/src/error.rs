use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),

    #[error("dictionary column {0} has zero norm")]
    ZeroDictionaryColumn(usize),

    #[error("covariate column {column}: expected {expected} value")]
    CovariateType { column: usize, expected: &'static str },

    #[error("non-finite covariate at row {row}, column {column}")]
    NonFiniteCovariate { row: usize, column: usize },

    #[error("label {0} is not 0 or 1")]
    InvalidLabel(f64),

    #[error("radius must be positive, got {0}")]
    InvalidRadius(f64),

    #[error("at least two samples are required, got {0}")]
    TooFewSamples(usize),

    #[error("population fit did not converge in {iters} iterations (residual {residual:e})")]
    NotConverged {
        iters: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("non-finite objective term at sample {0}")]
    NonFiniteSample(usize),

    #[error("non-finite update at iteration {0}")]
    NonFiniteUpdate(usize),
}

impl Error {
    /// True for failures of the numerical routines, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotConverged { .. } | Error::NonFiniteSample(_) | Error::NonFiniteUpdate(_)
        )
    }
}
