//! Error types shared across the engine.

use thiserror::Error;

/// Syntax error from the expression parser, with the byte offset of the
/// offending token.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("syntax error at byte {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

/// Evaluation-time error: unbound names, domain violations, shape mismatches.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    #[error("unbound identifier `{name}`")]
    Unbound { name: String },
    #[error("domain error in `{subexpr}`: {reason}")]
    Domain { subexpr: String, reason: String },
    #[error("point has {found} components, layout expects {expected}")]
    PointLength { expected: usize, found: usize },
    #[error("invalid identifier `{name}`")]
    InvalidIdentifier { name: String },
    #[error("duplicate variable `{name}` in layout")]
    DuplicateVariable { name: String },
    #[error("active variable `{name}` is not in the layout")]
    ActiveNotInLayout { name: String },
    #[error("second derivative of abs at zero in `{subexpr}`")]
    AbsKink { subexpr: String },
}

/// Linear-algebra errors from the small dense solver.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum LinAlgError {
    #[error("singular matrix: pivot {pivot_index} has magnitude {pivot_magnitude:e} below threshold {threshold:e}")]
    Singular {
        pivot_index: usize,
        pivot_magnitude: f64,
        threshold: f64,
    },
    #[error("dimension mismatch: matrix is {n}x{n}, vector has length {len}")]
    Shape { n: usize, len: usize },
    #[error("matrix dimension {n} exceeds the engine cap of {cap}")]
    DimensionCap { n: usize, cap: usize },
    #[error("matrix entries must be finite")]
    NonFinite,
}

/// Top-level engine error.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum MechError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    LinAlg(#[from] LinAlgError),
    #[error("singular Lagrangian at the queried point: {detail}")]
    SingularLagrangian { detail: String },
    #[error("point is off the constraint surface: max residual {residual:e} exceeds tolerance {tolerance:e}")]
    OffConstraint { residual: f64, tolerance: f64 },
    #[error("singular metric at the queried point: {detail}")]
    SingularMetric { detail: String },
    #[error("metric is not positive-definite at the queried point: {detail}")]
    NotPositiveDefinite { detail: String },
    #[error("constraint gradients are linearly dependent at the queried point")]
    DependentConstraints,
    #[error("velocity violates the constraints: residual {residual:e} exceeds tolerance {tolerance:e}")]
    OffConstraintVelocity { residual: f64, tolerance: f64 },
    #[error("constraint `{constraint}` is not linear in the velocities")]
    NonlinearVelocityConstraint { constraint: String },
    #[error("denominator quantity fell inside the zero guard (|F2| = {magnitude:e} < {guard:e}) at t = {t}")]
    QuotientZeroGuard { magnitude: f64, guard: f64, t: f64 },
    #[error("field evaluation failed at t = {t}: {source}")]
    FieldAt {
        t: f64,
        #[source]
        source: Box<MechError>,
    },
    #[error("integration step size underflow at t = {t} (min step {min_step:e})")]
    StepUnderflow { t: f64, min_step: f64 },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("unknown registry system `{0}`")]
    UnknownSystem(String),
}

impl MechError {
    pub(crate) fn at_time(self, t: f64) -> MechError {
        MechError::FieldAt {
            t,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = MechError> = std::result::Result<T, E>;
