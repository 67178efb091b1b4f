use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("drive fields form a closed loop through {0}; no rotating frame exists")]
    CyclicDriveGraph(String),
    #[error("level {0} is not reachable from the probe through drive fields")]
    DisconnectedDriveGraph(String),
    #[error("scheme must contain exactly one field with id \"probe\" (found {0})")]
    MissingProbe(usize),
    #[error("bad decay branching on level {level}: {reason}")]
    BadBranching { level: String, reason: String },
    #[error("invalid scheme: {0}")]
    InvalidScheme(String),
    #[error("unknown preset kind {0:?}")]
    UnknownKind(String),
    #[error("non-physical parameter {name} = {value}")]
    NonPhysicalParams { name: &'static str, value: f64 },
    #[error("steady state is not unique (pivot ratio {pivot_ratio:.3e})")]
    SingularLiouvillian { pivot_ratio: f64 },
    #[error("integrator step size underflow at t = {t}")]
    StepFailure { t: f64 },
    #[error("probe Rabi frequency is zero; absorption is undefined")]
    ZeroProbe,
    #[error("bad quadrature grid: {0}")]
    BadGridParams(String),
    #[error("solver failed for ensemble variable u = {u}: {source}")]
    AtSample {
        u: f64,
        #[source]
        source: Box<Error>,
    },
    #[error("bad beam profile: {0}")]
    BadProfile(String),
    #[error("no samples inside window [{lo}, {hi}] MHz")]
    EmptyWindow { lo: f64, hi: f64 },
    #[error("input {name} must be positive (got {value})")]
    NonPositiveInput { name: &'static str, value: f64 },
    #[error("wavevector ratio must be positive (got {0})")]
    NonPositiveEta(f64),
    #[error("no transmission window found: {0}")]
    NoWindowFound(String),
    #[error("bad sweep: {0}")]
    BadSweep(String),
    #[error("unknown figure {0:?}")]
    UnknownFigure(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}
