use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },

    #[error("unknown channel `{name}` at {line}:{col}")]
    UnknownChannel { name: String, line: usize, col: usize },

    #[error("invalid interval [{lo},{hi}] at {line}:{col}: upper bound below lower bound")]
    BadInterval { lo: usize, hi: usize, line: usize, col: usize },

    #[error("formula horizon {needed} does not fit at t={t} in a trace of length {len} ({})", valid_range(*max_t))]
    HorizonOverflow { t: usize, needed: usize, len: usize, max_t: Option<usize> },

    #[error("channel `{0}` is not in the trace schema")]
    MissingChannel(String),

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch { op: &'static str, lhs: (usize, usize), rhs: (usize, usize) },

    #[error("{op} is undefined at forward value {value}")]
    Domain { op: &'static str, value: f64 },

    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarOutput((usize, usize)),

    #[error("non-finite state after step")]
    NonFiniteState,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown benchmark `{0}` (valid: traffic, reach-avoid, ship-safe, ship-track, navigation)")]
    UnknownBenchmark(String),

    #[error("training diverged at step {step}: non-finite loss on batch {batch:?}")]
    NonFiniteLoss { step: usize, batch: Vec<usize> },

    #[error("non-finite gradient at planner iteration {0}")]
    NonFiniteGradient(usize),

    #[error("model file: {0}")]
    Model(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

fn valid_range(max_t: Option<usize>) -> String {
    match max_t {
        Some(m) => format!("valid t: 0..={m}"),
        None => "no valid t".to_string(),
    }
}
