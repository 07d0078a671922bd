use thiserror::Error;

/// Errors raised by the model, operator, eigen and dynamics layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("coefficient `{function}` is negative ({value:e}) at x = {x}")]
    NegativeCoefficient {
        function: &'static str,
        x: f64,
        value: f64,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("monomer level must be nonnegative, got {0}")]
    NegativeMonomer(f64),

    #[error("eigen iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("positivity violated: {what} has entry {value:e} at index {index}")]
    PositivityViolation {
        what: &'static str,
        index: usize,
        value: f64,
    },

    #[error("eigen solve failed at V = {v}: {source}")]
    AtMonomerLevel {
        v: f64,
        #[source]
        source: Box<ModelError>,
    },

    #[error("no sign change of the eigenvalue on [0, {v_max}] (Λ = {lambda_at_v_max:e} at the right end)")]
    NoSteadyState { v_max: f64, lambda_at_v_max: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration failed at t = {t}: {reason}")]
    IntegrationFailed { t: f64, reason: String },
}

pub type Result<T> = std::result::Result<T, ModelError>;
