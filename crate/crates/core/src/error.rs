use alloc::string::String;

use crate::numerics::LinalgError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("invalid value for `{field}`: {constraint}")]
    Invalid { field: &'static str, constraint: String },
    #[error("unknown algorithm `{name}` for {experiment}")]
    UnknownAlgorithm { name: String, experiment: &'static str },
    #[error("search space of {candidates} candidates exceeds cap {cap}; {hint}")]
    SearchSpaceTooLarge { candidates: f64, cap: u64, hint: &'static str },
    #[error("odd bit count {0}; QPSK needs pairs of bits")]
    OddBitCount(usize),
    #[error("{0} is not a constellation point; slice before demodulating")]
    NotAConstellationPoint(crate::Complex),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("inconsistent block shapes: block {index} is {found:?}, expected {expected:?}")]
    BlockShape { index: usize, found: (usize, usize), expected: (usize, usize) },
}

impl Error {
    /// True for failures raised by the numerical kernels rather than by bad
    /// input or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Linalg(_))
    }
}
