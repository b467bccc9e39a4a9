use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid coefficient ring: {0}")]
    InvalidRing(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("element or matrix is not invertible")]
    NotInvertible,
    #[error("series is not divisible by the requested power")]
    NonDivisible,
    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),
    #[error("Frobenius matrix {0} does not have Hodge type v0")]
    NotHodgeV0(usize),
    #[error("determinant is not a unit times v")]
    DetNotUnitTimesV,
    #[error("module is not regular: {0}")]
    NotRegular(String),
    #[error("no convergence after {steps} steps (last closeness levels {trace:?})")]
    NoConvergence { steps: usize, trace: Vec<usize> },
    #[error("non-unit denominator at index {0}")]
    NonUnitDenominator(usize),
    #[error("shape is not in P_tau")]
    ShapeNotAdmissible,
    #[error("weight is a twist of the trivial or Steinberg weight")]
    NotCovered,
    #[error("base-change relation fails at index {0}")]
    RelationFails(usize),
    #[error("Laurent window too small: {0}")]
    WindowTooSmall(String),
    #[error("parameters exceed enumeration bounds: {0}")]
    BoundsExceeded(String),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error("incompatible operands: {0}")]
    Mismatch(String),
}
