use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("projection did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("initial state {point:?} lies outside the closed domain (phi = {phi:e})")]
    InvalidInitialState { point: Vec<f64>, phi: f64 },

    #[error("regression normal equations are singular at step {step} (condition number {condition:e})")]
    SingularRegression { step: usize, condition: f64 },

    #[error("increasing process decreases by {drop:e} at sample {index}")]
    NotMonotone { index: usize, drop: f64 },

    #[error("time step {dt:e} exceeds the stability bound {bound:e}")]
    CflViolation { dt: f64, bound: f64 },

    #[error("value {value:e} at layer {layer} exceeds the divergence threshold")]
    Divergence { layer: usize, value: f64 },

    #[error("meshes do not match: {0}")]
    MeshMismatch(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
