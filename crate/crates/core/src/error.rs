use thiserror::Error;

/// Errors raised by the simulator and its numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Configuration rejected; every violation is listed.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    /// An iterative solve did not reach its tolerance.
    #[error("{solver} did not converge: residual {residual:.3e} after {iterations} iterations (tol {tol:.3e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    /// Time step larger than the stability/positivity bound of the current state.
    #[error("time step {dt:.3e} violates the CFL bound; suggested dt {suggested:.3e}")]
    Cfl { dt: f64, suggested: f64 },

    /// The evolving state violates an invariant (negative density, NaN, ...).
    #[error("invalid state: {0}")]
    State(String),

    /// Malformed snapshot file.
    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
