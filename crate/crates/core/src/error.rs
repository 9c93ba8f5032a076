use thiserror::Error;

/// Errors produced by scenario validation, the covariance engine and the
/// optimizer. Variants carry enough context (target ids, residuals) to make
/// batch runs diagnosable from the message alone.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scenario field `{field}`: {message}")]
    Scenario { field: String, message: String },

    #[error("covariance propagation diverged for target {target} at t={time:.4} (|omega|_F = {norm:.3e})")]
    Divergence { target: usize, time: f64, norm: f64 },

    #[error("target {0} is never sensed over the period; a periodic steady state does not exist (initialize with a trajectory that visits every target)")]
    NeverVisited(usize),

    #[error("periodic covariance solve for target {target} did not converge after {periods} periods (last residual {residual:.3e})")]
    NonConvergence {
        target: usize,
        periods: usize,
        residual: f64,
    },

    #[error("monodromy of target {target} is not a contraction (spectral radius {rho:.8}); the target is effectively unvisited or the integration failed")]
    ContractionViolated { target: usize, rho: f64 },

    #[error("parameter projection did not converge after {0} sweeps (NaN input?)")]
    ProjectionFailure(usize),

    #[error("waypoint fit infeasible for agent {agent} (worst violation {violation:.3e}); retry with more harmonics (K > {k})")]
    FitInfeasible {
        agent: usize,
        violation: f64,
        k: usize,
    },

    #[error("targets are not isolated (minimum gap {gap:.4} <= 0); the bang/dwell canonicalization loses its optimality guarantee. Pass allow_non_isolated to force it")]
    NotIsolated { gap: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn scenario(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Scenario {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
