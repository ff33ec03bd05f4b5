use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("schema error at line {line}: {msg}")]
    Schema { line: usize, msg: String },

    #[error("no rows")]
    NoRows,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("complete separation detected while fitting {0}")]
    Separation(String),

    #[error("singular information matrix while fitting {0}")]
    Singular(String),

    #[error("rank-deficient design while fitting {0}")]
    RankDeficient(String),

    #[error("positivity violated: probability {value:.3e} below 1e-6 ({context})")]
    Positivity { value: f64, context: &'static str },

    #[error("infeasible moment constraint: zero is not inside the range of the constraint values")]
    InfeasibleConstraint,

    #[error("nonpositive empirical-likelihood denominator at index {index}")]
    NonPositiveDenominator { index: usize },

    #[error("unsupported functional: {0}")]
    Unsupported(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: String,
        iterations: usize,
        residual: f64,
    },

    #[error("fitted density is zero at evaluation row {0}")]
    ZeroDensity(usize),

    #[error("missing prediction for masked row {0}")]
    MissingPrediction(usize),
}

impl Error {
    /// True for failures of an iterative numerical procedure, as opposed to
    /// bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::Separation(_)
                | Error::Singular(_)
                | Error::RankDeficient(_)
                | Error::Positivity { .. }
                | Error::InfeasibleConstraint
                | Error::NonPositiveDenominator { .. }
                | Error::ZeroDensity(_)
        )
    }
}
