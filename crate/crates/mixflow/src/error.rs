//! Error type shared by all solver modules.

use thiserror::Error;

/// Library result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (grid sizes, horizons, node counts, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Two fields that must share a grid do not.
    #[error("grid mismatch: expected {expected:?}, got {got:?}")]
    GridMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    /// Malformed field file or trajectory manifest.
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Right-hand side violates a compatibility condition (e.g. nonzero mean
    /// on the torus).
    #[error("solvability error: {0}")]
    Solvability(String),

    /// Coefficient or density dropped below the positivity floor.
    #[error("degeneracy error: {0}")]
    Degenerate(String),

    /// Iterative solver hit its iteration cap.
    #[error("convergence error: achieved residual {achieved:.3e}, required {required:.3e} after {iterations} iterations")]
    Convergence {
        achieved: f64,
        required: f64,
        iterations: usize,
    },

    /// An input violates a dynamic constraint (e.g. velocity not
    /// divergence-free).
    #[error("constraint violation: {0}")]
    ConstraintViolation(String),

    /// Time step too large for the advection CFL bound.
    #[error("step-size error: {0}")]
    StepSize(String),

    /// Time integration produced non-finite values.
    #[error("integration diverged; last valid time {time}")]
    Diverged { time: f64 },

    /// Constrained least-norm problem has no solution for the given data.
    #[error("infeasible constraints: best residual {residual:.3e}")]
    Infeasible { residual: f64 },
}
