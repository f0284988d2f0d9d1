use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("smoothing window must be odd and positive, got {0}")]
    EvenWindow(usize),
    #[error("polynomial order {order} must be smaller than window {window}")]
    OrderTooLarge { order: usize, window: usize },
    #[error("trace has {len} samples, needs at least {needed}")]
    TraceTooShort { len: usize, needed: usize },
    #[error("trace is empty")]
    EmptyTrace,
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("{0} must be at least 1")]
    ZeroParameter(&'static str),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cosine distance is undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("Minkowski exponent must be finite and positive, got {0}")]
    InvalidExponent(f64),
    #[error("dataset holds {len} samples, k = {k} requires at least k")]
    DatasetTooSmall { len: usize, k: usize },
    #[error("l-value {0} outside [50, 100]")]
    InvalidLValue(f64),
    #[error("neighbor label list is empty")]
    EmptyLabels,
    #[error("expected {expected} neighbor labels, got {got}")]
    LabelCountMismatch { expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("trial stream exhausted during seeding after {consumed} trials")]
    StreamExhausted { consumed: usize },
    #[error("record list is empty")]
    EmptyRecords,
    #[error("report list is empty")]
    EmptyReports,
}
