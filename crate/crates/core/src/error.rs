use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model or parameter set violates one or more invariants.
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("parse error in {field}{}: {message}", .line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Parse { field: String, line: Option<usize>, message: String },

    /// Requested distortion level outside the admissible interval.
    #[error("distortion {d} outside ({d_min}, {d_max})")]
    Range { d: f64, d_min: f64, d_max: f64 },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// The optimization problem has no feasible point.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// An evaluator declined to produce a number it cannot certify.
    #[error("refused: {0}")]
    Refused(String),

    #[error(
        "kernel violates the deterministic-distortion condition at x-block {x_block:?}, z-blocks {z_a:?} / {z_b:?}"
    )]
    ConditionViolation { x_block: Vec<usize>, z_a: Vec<usize>, z_b: Vec<usize> },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
