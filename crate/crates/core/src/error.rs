use thiserror::Error;

/// Errors raised by the HDG discretization and its drivers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HdgError {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("element index {index} out of range 1..={count}")]
    ElementOutOfRange { index: usize, count: usize },

    #[error("quadrature needs at least one point")]
    EmptyQuadrature,

    #[error("{points} quadrature points cannot resolve degree {degree} (need at least {})", degree + 1)]
    UnderIntegratedBasis { degree: usize, points: usize },

    #[error("effective time step must be positive and finite, got {0}")]
    NonPositiveTimeStep(f64),

    #[error("local matrix on element {element} is singular (smallest pivot {pivot:.3e})")]
    SingularLocal { element: usize, pivot: f64 },

    #[error("global trace matrix is singular at pivot row {row}")]
    SingularGlobal { row: usize },

    #[error("projection system is singular (tau_qu+ + tau_qu- - tau_pu+ * tau_qp- = {cond_tau:.3e})")]
    SingularProjection { cond_tau: f64 },

    #[error("Newton did not converge in {iterations} iterations (residual history {history:?})")]
    NewtonDiverged { iterations: usize, history: Vec<f64> },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("stationary initialization needs u0' and u0''' but they were not supplied")]
    MissingInitialDerivative,

    #[error("dense conversion of a {size}x{size} system exceeds the cap {cap}")]
    ConditionCapExceeded { size: usize, cap: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, HdgError>;
