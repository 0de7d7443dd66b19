use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The shell displacement reached the tube half-width or the Jacobian lost positivity.
    #[error("degeneracy at t = {time}: {detail}")]
    Degeneracy { time: f64, detail: String },

    #[error("linear solver `{solver}` did not converge: {iterations} iterations, residual {residual:e}")]
    Solver {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("interface iteration did not converge at t = {time}: residual {residual:e} after {iterations} sub-iterations")]
    InterfaceNotConverged {
        time: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("record error: {0}")]
    Record(String),

    #[error("acceptance check failed: {0}")]
    Acceptance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 2,
            Error::Degeneracy { .. } => 3,
            Error::Solver { .. }
            | Error::InterfaceNotConverged { .. }
            | Error::Numerical(_)
            | Error::Record(_)
            | Error::Io(_) => 4,
            Error::Acceptance(_) => 5,
        }
    }

    /// Attaches a time stamp to errors that carry one.
    pub fn at_time(self, t: f64) -> Self {
        match self {
            Error::Degeneracy { detail, .. } => Error::Degeneracy { time: t, detail },
            Error::InterfaceNotConverged {
                residual,
                iterations,
                ..
            } => Error::InterfaceNotConverged {
                time: t,
                residual,
                iterations,
            },
            other => other,
        }
    }

    /// Stable one-word class for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Degeneracy { .. } => "degeneracy",
            Error::Solver { .. } => "solver",
            Error::InterfaceNotConverged { .. } => "interface",
            Error::Numerical(_) => "numerical",
            Error::Record(_) => "record",
            Error::Acceptance(_) => "acceptance",
            Error::Io(_) => "io",
        }
    }
}
