use thiserror::Error;

/// Errors produced by model construction, simulation, and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameter, state, or input file content.
    #[error("domain error: {0}")]
    Domain(String),
    /// An iterative solver failed to reach its tolerance.
    #[error("convergence error: {0}")]
    Convergence(String),
    /// A line-counting chain exceeded the configured state cap.
    #[error("state cap exceeded: chain reached {state}, cap is {cap}")]
    StateCap { state: u64, cap: u64 },
    /// A request went past the precomputed range of a rate table.
    #[error("rate table range exceeded: row {requested}, table holds {max}")]
    TableRange { requested: u64, max: u64 },
    /// The truncated working dimension cannot represent the result.
    #[error("truncation insufficient: {0}")]
    Truncation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line interface.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Convergence(_) | Error::Truncation(_) => 2,
            _ => 1,
        }
    }
}
