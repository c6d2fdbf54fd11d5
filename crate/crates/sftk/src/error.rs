use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("resource cap exceeded: {what} needs {required}, cap is {cap}")]
    Cap {
        what: &'static str,
        required: u128,
        cap: u128,
    },
    #[error("matrix is not primitive: {0}")]
    NotPrimitive(String),
    #[error("power iteration did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("spectral gap absent: eigenvalue {0} within guard of the rounding threshold")]
    SpectralGap(f64),
    #[error("rank mismatch: {0} vs {1}")]
    RankMismatch(usize, usize),
    #[error("undecided at cap: {0}")]
    Undecided(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

pub type Result<T> = std::result::Result<T, Error>;
