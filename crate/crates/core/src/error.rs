use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point outside observation domain: t={t}, s={s:?}")]
    PointOutsideDomain { t: f64, s: Vec<f64> },

    #[error("event times must be strictly increasing: t={t} at position {index} does not exceed its predecessor")]
    UnorderedEvents { index: usize, t: f64 },

    #[error("invalid triggering support: a={a}, b={b} (both must lie in (0, 1/2))")]
    InvalidSupport { a: f64, b: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid kernel specification: {0}")]
    InvalidKernel(String),

    #[error("link inversion outside range: value {value} not in {range}")]
    LinkDomain { value: f64, range: String },

    #[error(
        "Cholesky factorization failed at maximum jitter {max_jitter:.3e} \
         (gram diagonal range [{min_diag:.3e}, {max_diag:.3e}], {n} nodes)"
    )]
    CholeskyFailed {
        max_jitter: f64,
        min_diag: f64,
        max_diag: f64,
        n: usize,
    },

    #[error("event cap exceeded while generating sequence {sequence}")]
    EventCapExceeded { sequence: usize },

    #[error("nonpositive intensity {value} at event {event} of sequence {sequence}")]
    NonpositiveIntensity {
        sequence: usize,
        event: usize,
        value: f64,
    },

    #[error("objective became non-finite at iteration {iteration}")]
    NonFiniteObjective { iteration: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("csv format error at line {line}: {msg}")]
    CsvFormat { line: usize, msg: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
