use thiserror::Error;

use crate::variational::SolveReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("coefficient a(x) invalid at ({x}, {y}): value {value} (a(x) >= 0 and finite required)")]
    Coefficient { x: f64, y: f64, value: f64 },

    #[error("flux Jacobian is singular at zero gradient (delta = 0, exponent < 2)")]
    SingularJacobian,

    #[error("field does not live on the expected grid")]
    GridMismatch,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("malformed field header: {0}")]
    MalformedHeader(String),

    #[error("field value count mismatch: expected {expected}, found {found}")]
    CountMismatch { expected: usize, found: usize },

    #[error("non-finite value at node {0}")]
    NonFiniteValue(usize),

    #[error("Luxemburg bisection could not bracket the unit level set")]
    BracketFailure,

    #[error("field does not vanish on the boundary (node {node}, value {value})")]
    NotVanishingOnBoundary { node: usize, value: f64 },

    #[error("exponent condition violated: {0}")]
    ExponentViolation(String),

    #[error("solver did not converge: {reason}")]
    NonConvergence {
        reason: String,
        report: Box<SolveReport>,
    },

    #[error("linear solve failed: non-positive pivot {pivot:e} at row {row}")]
    LinearSolveFailure { row: usize, pivot: f64 },

    #[error("obstacle is infeasible: {0}")]
    InfeasibleObstacle(String),

    #[error("gradient vanishes where the operator is singular (|eta| = {0:e})")]
    DegenerateGradient(f64),

    #[error("no touching test function found at node {0}")]
    NoTouchFound(usize),

    #[error("invalid penalty exponent s = {s}: need s > {bound}")]
    InvalidExponent { s: f64, bound: f64 },

    #[error("viscosity solver requires a constant coefficient (set the variable-coefficient override for experiments)")]
    VariableCoefficient,

    #[error("finite-difference stencil is not monotone at node {0}")]
    NonMonotoneStencil(usize),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("table error: {0}")]
    Table(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
