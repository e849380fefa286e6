use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical breakdown: {0}")]
    Numeric(String),

    /// A structural assumption on the recourse data or measure does not hold.
    #[error("{assumption} violated: {detail}")]
    Assumption { assumption: &'static str, detail: String },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("unbounded: {0}")]
    Unbounded(String),

    #[error("cone degenerate: {0}")]
    ConeDegenerate(String),

    /// The subgradient method ran out of iterations before its gap bound
    /// reached the requested tolerance. The best iterate is attached.
    #[error("no convergence after {iterations} iterations (gap bound {gap_bound:e}, best value {best_value})")]
    NonConvergence {
        iterations: usize,
        gap_bound: f64,
        best_x: Vec<f64>,
        best_value: f64,
    },

    #[error("oracle dimension limit: n = {0} > 2")]
    OracleDimension(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
