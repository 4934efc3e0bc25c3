use thiserror::Error;

/// Errors raised by the propagation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("empty working space: all {n} overlap eigenvalues below eps_S = {eps:e} (largest {largest:e})")]
    EmptyWorkingSpace { n: usize, eps: f64, largest: f64 },

    #[error("infeasible pinning: {pinned} pinned vectors exceed target dimension {target}")]
    InfeasiblePinning { pinned: usize, target: usize },

    #[error("{routine} failed on a {rows}x{cols} matrix (max |entry| = {max_abs:e})")]
    Decomposition {
        routine: &'static str,
        rows: usize,
        cols: usize,
        max_abs: f64,
    },

    #[error("linear solve failed (pivot ratio estimate {condition:e}): {reason}")]
    Solve { condition: f64, reason: String },

    #[error("Newton iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NewtonDivergence { iterations: usize, residual: f64 },

    #[error("non-finite values produced at t = {time}")]
    NonFinite { time: f64 },

    #[error("norm {norm:e} left the admissible range at t = {time}")]
    Diverged { time: f64, norm: f64 },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
