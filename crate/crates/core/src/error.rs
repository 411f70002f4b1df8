use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("density {value} outside the constitutive range [{lo}, {hi}]")]
    Range { value: f64, lo: f64, hi: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("solver failed: {msg} (residual {residual:.3e})")]
    Solver { msg: String, residual: f64 },

    /// Requested step exceeds the stability/positivity bound; retry with `bound`.
    #[error("time step {dt:.3e} exceeds the stability bound {bound:.3e}")]
    StepTooLarge { dt: f64, bound: f64 },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {msg}")]
    Parse { what: String, msg: String },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn solver(msg: impl Into<String>, residual: f64) -> Self {
        Error::Solver { msg: msg.into(), residual }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    pub fn parse(what: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Parse { what: what.into(), msg: msg.into() }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Geometry(_)
            | Error::NotApplicable(_)
            | Error::Parse { .. }
            | Error::Io { .. } => 2,
            Error::Range { .. }
            | Error::Precondition(_)
            | Error::Solver { .. }
            | Error::StepTooLarge { .. }
            | Error::Internal(_) => 3,
            Error::Contract(_) => 4,
        }
    }
}
