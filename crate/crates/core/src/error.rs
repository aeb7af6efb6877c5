use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A Gaussian whose real quadratic coefficient is not positive.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("term budget exceeded: {needed} > cap {cap}")]
    Budget { needed: usize, cap: usize },
    #[error("quadrature did not converge: estimated error {achieved:e} > tolerance {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },
    /// Regime or validity-window violation, naming the inequality.
    #[error("guard violation: {0}")]
    Guard(String),
    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },
    #[error("tolerance failure: {0}")]
    Tolerance(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
