use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("incompatible shapes {left:?} and {right:?}")]
    IncompatibleShapes { left: Vec<usize>, right: Vec<usize> },

    #[error("shape {shape:?} does not match {len} elements")]
    ShapeMismatch { shape: Vec<usize>, len: usize },

    #[error("expected a single-element array, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },

    #[error("operation requires recording mode")]
    NotRecording,

    #[error("computation graph contains a cycle")]
    CycleDetected,

    #[error("kernel of length {kernel} is longer than signal of length {signal}")]
    KernelTooLong { signal: usize, kernel: usize },

    #[error("length {len} is not divisible by pool width {width}")]
    NotDivisible { len: usize, width: usize },

    #[error("{op}: argument outside the domain")]
    DomainError { op: &'static str },

    #[error("division by zero")]
    DivisionByZero,

    #[error("{op}: expected a 1-d array, got shape {shape:?}")]
    RankError { op: &'static str, shape: Vec<usize> },

    #[error("slice [{start}, {end}) out of bounds for length {len}")]
    OutOfBounds {
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("{op}: wrong number of inputs ({got})")]
    Arity { op: &'static str, got: usize },

    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },

    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("no sign change after {iterations} iterations")]
    NoProgress { iterations: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// True for failures caused by floating-point overflow rather than bad
    /// input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::NonFiniteLoss { .. })
    }
}
