use thiserror::Error;

/// Every failure the toolkit can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ShapeError {
    #[error("input is empty")]
    EmptyInput,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("design points must be strictly increasing (violation at index {index})")]
    NonIncreasingDesign { index: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("weights must be positive (index {index})")]
    BadWeight { index: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("t = {t} outside the domain of the fit")]
    OutOfDomain { t: f64 },
    #[error("no convergence after {iterations} iterations (violation {violation:e}, gap {gap:e})")]
    NonConvergence {
        iterations: usize,
        violation: f64,
        gap: f64,
        best: Vec<f64>,
    },
    #[error("order k = {k} must be smaller than n = {n}")]
    BadOrder { k: usize, n: usize },
    #[error("point dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("explicit order contains a cycle")]
    CyclicOrder,
    #[error("design points {0} and {1} coincide")]
    DuplicatePoint(usize, usize),
    #[error("order relation has no comparator for new points")]
    NoComparator,
    #[error("every candidate direction gives constant projections")]
    DegenerateProjection,
    #[error("bandwidth must satisfy 0 < h < 1/2, got {0}")]
    BadBandwidth(f64),
    #[error("evaluation point {t} outside [h, 1-h] with h = {h}")]
    BadEvaluationPoint { t: f64, h: f64 },
    #[error("level alpha must lie in (0,1), got {0}")]
    BadLevel(f64),
    #[error("at least {min} replications required, got {got}")]
    TooFewReplications { min: usize, got: usize },
    #[error("grid step must be <= 0.01 and horizon >= 2 (step {step}, horizon {horizon})")]
    BadGrid { step: f64, horizon: f64 },
    #[error("estimator or bound does not apply to family {0}")]
    FamilyMismatch(String),
    #[error("blocks do not partition 1..n")]
    BadPartition,
    #[error("vector is not nondecreasing")]
    NotIsotonic,
    #[error("exponent p = {0} not supported here")]
    BadExponent(f64),
    #[error("need at least 4 points spanning 1.5 decades of n")]
    TooFewPoints,
    #[error("null table: {0}")]
    Table(String),
}

pub type Result<T> = std::result::Result<T, ShapeError>;

pub(crate) fn check_finite(v: &[f64]) -> Result<()> {
    match v.iter().position(|a| !a.is_finite()) {
        Some(index) => Err(ShapeError::NonFinite { index }),
        None => Ok(()),
    }
}
