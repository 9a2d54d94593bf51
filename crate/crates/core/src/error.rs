use thiserror::Error;

/// Errors produced by the design solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),

    /// The running variable has zero variance, so no design can identify the model.
    #[error("degenerate running variable: {0}")]
    Degenerate(String),

    /// `(z_tilde, xz)` lies outside the feasible input space.
    #[error("constraints outside the feasible input space: {message} (z_tilde = {z_tilde}, xz = {xz}, xz_max = {xz_max})")]
    Infeasible {
        message: String,
        z_tilde: f64,
        xz: f64,
        xz_max: f64,
    },

    #[error("no feasible three level tie-breaker design: delta = {delta} must lie in [0, {max}]")]
    ThreeLevelInfeasible { delta: f64, max: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    /// A root search could not bracket its target; `trace` holds `(parameter, residual)` pairs.
    #[error("bracket failure: {message}")]
    Bracket {
        message: String,
        trace: Vec<(f64, f64)>,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
