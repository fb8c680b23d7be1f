use thiserror::Error;

/// Errors raised by the solvers. Numeric payloads are reported as `f64`
/// whatever the scalar type of the computation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("non-finite value {value} at node {node}")]
    NonFinite { node: usize, value: f64 },

    #[error("{name} must be strictly positive (node {node} has {value})")]
    NonPositive {
        name: &'static str,
        node: usize,
        value: f64,
    },

    #[error("field has {got} values but the mesh has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },

    #[error("fields are defined on different meshes")]
    MeshMismatch,

    #[error("singular system: {0}")]
    Singular(String),

    #[error("{what} did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("eps = {eps} is inadmissible: {inequality} fails at x = {x}")]
    Inadmissible {
        eps: f64,
        inequality: &'static str,
        x: f64,
    },

    #[error("starting pair is not a valid {kind} solution: {detail}")]
    InvalidStart { kind: &'static str, detail: String },

    #[error(
        "{direction} iteration lost monotonicity at sweep {sweep} \
         ({component} exceeds previous iterate by {excess:e})"
    )]
    MonotonicityViolation {
        direction: &'static str,
        sweep: usize,
        component: &'static str,
        excess: f64,
    },

    #[error("no amplitude in 1e-1..1e-8 makes the scaled eigenfunction a lower solution")]
    NoLowerSolution,

    #[error("upward and downward limits differ by {distance:e} (tolerance {tolerance:e})")]
    UniquenessViolation { distance: f64, tolerance: f64 },

    #[error("time step {dt} exceeds the stability bound {bound}")]
    StepTooLarge { dt: f64, bound: f64 },

    #[error("{component} reached {value:e} at node {node}, t = {t}: scheme failure")]
    BlowUp {
        component: &'static str,
        node: usize,
        value: f64,
        t: f64,
    },

    #[error("logistic equation has no positive steady state (lambda = {lambda_beta})")]
    NoLogisticSteady { lambda_beta: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
