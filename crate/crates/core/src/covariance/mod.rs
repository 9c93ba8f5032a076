//! Covariance dynamics of the optimal estimator: Riccati propagation,
//! periodic steady states, parameter sensitivities and a Monte Carlo
//! validation of the filter itself.

mod filter;
mod lyapunov;
mod riccati;
mod sensitivity;

pub use filter::{simulate_kalman_bucy, FilterConfig, FilterStats};
pub use lyapunov::{dlyap_series, solve_discrete_lyapunov};
pub use riccati::{
    check_monotonicity, propagate_covariance, solve_periodic_riccati, SteadyOptions,
};
pub use sensitivity::{
    integrate_auxiliary, propagate_transient_sensitivities, propagate_transient_sensitivity,
    steady_sensitivity_batch, steady_state_sensitivity, SensitivityForcing, SteadyBatch,
    TransientBatch,
};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg;
use crate::scenario::TargetSpec;

/// Symmetry tolerance on stored covariance matrices.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Eigenvalue floor for positive semidefiniteness checks.
pub const PSD_TOL: f64 = 1e-9;
/// Frobenius norm beyond which propagation is reported as divergent.
pub const DIVERGENCE_GUARD: f64 = 1e12;

/// Covariance matrices of one target sampled on the step endpoints of an
/// integration grid.
#[derive(Debug, Clone)]
pub struct CovarianceTrajectory {
    pub target: usize,
    /// Physical duration covered (the period for steady trajectories).
    pub span: f64,
    pub grid: Grid,
    pub matrices: Vec<DMatrix<f64>>,
    pub steady: bool,
    /// `|omega(1) - omega(0)|_F` of the recorded period; zero for transients.
    pub periodic_residual: f64,
}

impl CovarianceTrajectory {
    pub fn traces(&self) -> Vec<f64> {
        self.matrices.iter().map(|m| m.trace()).collect()
    }

    /// Check symmetry, positive semidefiniteness and (for steady
    /// trajectories) periodicity at the stated tolerances.
    pub fn validate(&self, periodic_tol: f64) -> Result<()> {
        for (k, m) in self.matrices.iter().enumerate() {
            if linalg::asymmetry(m) > SYMMETRY_TOL {
                return Err(Error::invalid(format!(
                    "covariance at node {k} asymmetric by {:.3e}",
                    linalg::asymmetry(m)
                )));
            }
            let min_eig = linalg::min_eigenvalue(m);
            if min_eig < -PSD_TOL {
                return Err(Error::invalid(format!(
                    "covariance at node {k} indefinite (min eigenvalue {min_eig:.3e})"
                )));
            }
        }
        if self.steady && self.periodic_residual > periodic_tol {
            return Err(Error::invalid(format!(
                "steady trajectory violates periodicity: residual {:.3e}",
                self.periodic_residual
            )));
        }
        Ok(())
    }
}

/// Sensitivity of a covariance trajectory with respect to one parameter.
/// Steady-state sensitivities also carry the auxiliary solutions they were
/// assembled from; the transient variant leaves them empty.
#[derive(Debug, Clone)]
pub struct SensitivityTrajectory {
    pub target: usize,
    pub grid: Grid,
    pub sigma: Vec<DMatrix<f64>>,
    pub sigma_h: Vec<DMatrix<f64>>,
    pub sigma_zi: Vec<DMatrix<f64>>,
    pub lambda: Option<DMatrix<f64>>,
}

/// Precomputed constant matrices of one target's Riccati dynamics.
#[derive(Debug, Clone)]
pub(crate) struct TargetMatrices {
    pub a: DMatrix<f64>,
    pub a_t: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub l: usize,
}

impl TargetMatrices {
    pub fn new(spec: &TargetSpec) -> Self {
        let g = spec.gain();
        TargetMatrices {
            a: spec.a.clone(),
            a_t: spec.a.transpose(),
            q: spec.q.clone(),
            g,
            l: spec.state_dim(),
        }
    }

    /// `out = A w + w A' + Q - eta w G w`, using `tmp` as scratch.
    pub fn riccati_rhs(
        &self,
        w: &DMatrix<f64>,
        eta: f64,
        tmp: &mut DMatrix<f64>,
        out: &mut DMatrix<f64>,
    ) {
        out.copy_from(&self.q);
        out.gemm(1.0, &self.a, w, 1.0);
        out.gemm(1.0, w, &self.a_t, 1.0);
        if eta != 0.0 {
            tmp.gemm(1.0, w, &self.g, 0.0);
            out.gemm(-eta, tmp, w, 1.0);
        }
    }
}
