use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    InvalidParameter(String),

    #[error("uniform start needs L*(M-1) = {total} units divisible by M = {forms}")]
    NotDivisible { total: u64, forms: usize },

    #[error("form index {index} out of range for M = {forms}")]
    FormIndex { index: usize, forms: usize },

    #[error("state space of {states} states exceeds cap {cap}")]
    StateSpaceCap { states: u128, cap: usize },

    #[error("chain has {classes} closed classes, no designated recurrent class")]
    Reducible { classes: usize },

    #[error("solver `{solver}` cannot handle this chain: {reason}")]
    SolverNotApplicable { solver: &'static str, reason: String },

    #[error("solver `{solver}` did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("unknown solver `{0}`")]
    UnknownSolver(String),

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("series of length {len} is shorter than window {window}")]
    SeriesTooShort { len: usize, window: usize },

    #[error("convergence target unavailable: {0}")]
    TargetUnavailable(String),

    #[error("observation set is empty")]
    EmptyObservations,

    #[error("malformed data at line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag for diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::NotDivisible { .. } => "not-divisible",
            Error::FormIndex { .. } => "form-index",
            Error::StateSpaceCap { .. } => "state-space-cap",
            Error::Reducible { .. } => "reducible",
            Error::SolverNotApplicable { .. } => "solver-not-applicable",
            Error::NotConverged { .. } => "not-converged",
            Error::UnknownSolver(_) => "unknown-solver",
            Error::UnknownExperiment(_) => "unknown-experiment",
            Error::SeriesTooShort { .. } => "series-too-short",
            Error::TargetUnavailable(_) => "target-unavailable",
            Error::EmptyObservations => "empty-observations",
            Error::Malformed { .. } => "malformed-data",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }

    /// True for errors caused by bad user input rather than a failure while working.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::NotDivisible { .. }
                | Error::FormIndex { .. }
                | Error::UnknownSolver(_)
                | Error::UnknownExperiment(_)
        )
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
