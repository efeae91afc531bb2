use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown problem id `{0}`")]
    UnknownProblem(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("initial point {0:?} is not in the initial set")]
    InitialPointOutsideSet(Vec<f64>),

    #[error("control leaves the admissible set at t = {t}: {value:?}")]
    ControlOutsideSet { t: f64, value: Vec<f64> },

    #[error("integration failed at t = {last_time}: {reason}")]
    Integration { last_time: f64, reason: String },

    #[error("tail not certifiable: {0}")]
    TailNotCertifiable(String),

    #[error("horizon sequence invalid: {0}")]
    Horizons(String),

    #[error("costate computation failed at tau = {tau}: {reason}")]
    Costate { tau: f64, reason: String },

    #[error("no sign change in bracket [{lo}, {hi}]; residual table: {table:?}")]
    NoSignChange {
        lo: f64,
        hi: f64,
        table: Vec<(f64, f64)>,
    },

    #[error("multiple roots suspected in bracket [{lo}, {hi}]; residual table: {table:?}")]
    MultipleRoots {
        lo: f64,
        hi: f64,
        table: Vec<(f64, f64)>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("empty control sampler")]
    EmptySampler,

    #[error("io: {0}")]
    Io(String),

    #[error("parse: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
