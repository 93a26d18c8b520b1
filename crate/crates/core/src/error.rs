//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by the library. Numerical mismatches found during
/// verification are reported in [`crate::oracle::VerificationReport`]
/// instead of being raised.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A signature with `p + q = 0` or otherwise unusable for the request.
    #[error("invalid signature ({p},{q}): {reason}")]
    InvalidSignature { p: usize, q: usize, reason: String },

    /// A spacetime index outside `1..=d` or a malformed multi-index.
    #[error("invalid multi-index {indices:?} for dimension {d}: {reason}")]
    InvalidIndex {
        indices: Vec<usize>,
        d: usize,
        reason: String,
    },

    /// Odd dimensions beyond `d = 1` are not parametrised.
    #[error("odd dimension d = {d} is not supported here: {reason}")]
    OddDimension { d: usize, reason: String },

    /// Requested chord diagrams exceed the configured number of points.
    #[error("chord diagrams on {points} points exceed the cap of {cap}")]
    ChordCapExceeded { points: usize, cap: usize },

    /// A dense matrix would exceed the configured dimension cap.
    #[error("dense dimension {dim} exceeds the cap {cap} (override with FUZZY_DIM_CAP)")]
    DimensionCap { dim: usize, cap: usize },

    /// A matrix violates its declared (anti-)hermiticity constraint.
    #[error("matrix for {label} violates its hermiticity constraint (defect {defect:e})")]
    Hermiticity { label: String, defect: f64 },

    /// Shapes that do not fit together.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Missing or surplus coefficient matrices.
    #[error("coefficient data mismatch: {0}")]
    MissingCoefficient(String),

    /// No evaluation path covers a requested power.
    #[error("power {power} is not covered by any evaluation path: {reason}")]
    PowerNotCovered { power: u32, reason: String },

    /// A denominator that vanishes (for instance in the observable F).
    #[error("zero denominator while evaluating {0}")]
    ZeroDenominator(String),

    /// A request for an observable that was never recorded.
    #[error("unknown observable `{0}`")]
    UnknownObservable(String),

    /// The action evaluated to a non-finite number during sampling.
    #[error("non-finite action {value} at step {step}")]
    NonFiniteAction { step: usize, value: f64 },

    /// Reading or writing an external file or stream failed.
    #[error("i/o error: {0}")]
    Io(String),

    /// Invalid user-facing configuration or input text.
    #[error("invalid input: {0}")]
    Parse(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
