use thiserror::Error;

/// Errors shared across the crate. Most signal non-generic input data or a
/// numerical tolerance that could not be met, rather than programming bugs.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("eigenvalue collision: min gap {gap:.3e} below tolerance {tol:.3e}")]
    EigenvalueCollision { gap: f64, tol: f64 },

    #[error("resonant shift: denominator {denom:.3e} vanishes at entry ({row},{col})")]
    ResonantShift { row: usize, col: usize, denom: f64 },

    #[error("step size underflow at z = {at} (path too close to a singularity?)")]
    StepUnderflow { at: String },

    #[error("evaluation at a pole (z = {at})")]
    PoleEvaluation { at: String },

    #[error("truncation order {n} too short for pole order {k}")]
    TruncationTooShort { n: usize, k: usize },

    #[error("degenerate leading term for pair ({i},{j})")]
    DegenerateLeadingTerm { i: usize, j: usize },

    #[error("base sector angle {angle} lies on an anti-Stokes ray")]
    BaseOnRay { angle: f64 },

    #[error("Stokes factor support violation: off-support mass {mass:.3e} exceeds {tol:.3e}")]
    SupportViolation { mass: f64, tol: f64 },

    #[error("matrix is not unipotent triangular after permutation (defect {defect:.3e})")]
    NotUnipotent { defect: f64 },

    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },

    #[error("operation requires pole order k >= 2 (simple pole unsupported)")]
    SimplePoleUnsupported,

    #[error("point is off the zero level set of the moment map (residue sum {norm:.3e})")]
    OffLevelSet { norm: f64 },

    #[error("point is off the gauge slice (first framing differs from 1 by {norm:.3e})")]
    OffSlice { norm: f64 },

    #[error("asymptotic matching unreliable: truncation estimate {estimate:.3e} exceeds {tol:.3e}")]
    MatchingUnreliable { estimate: f64, tol: f64 },

    #[error("degenerate tentacles: {context}")]
    TentacleDegenerate { context: String },

    #[error("pole collision: |a_{i} - a_{j}| = {dist:.3e}")]
    PoleCollision { i: usize, j: usize, dist: f64 },

    #[error("genericity lost along the flow: {context}")]
    GenericityLost { context: String },

    #[error("singular matrix in {context}")]
    Singular { context: String },

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
