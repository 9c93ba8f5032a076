//! Fixed-step RK4 propagation of the covariance Riccati ODE and the periodic
//! steady-state solve by period-map fixed-point iteration.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg;
use crate::scenario::TargetSpec;

use super::{CovarianceTrajectory, TargetMatrices, DIVERGENCE_GUARD};

/// One RK4 step of the Riccati flow scaled to physical duration `h`,
/// consuming the sensed power at the step start, midpoint and end.
/// Symmetrizes afterwards to suppress asymmetric drift.
pub(crate) struct RiccatiStepper {
    pub tm: TargetMatrices,
    k1: DMatrix<f64>,
    k2: DMatrix<f64>,
    k3: DMatrix<f64>,
    k4: DMatrix<f64>,
    stage: DMatrix<f64>,
    tmp: DMatrix<f64>,
}

impl RiccatiStepper {
    pub fn new(spec: &TargetSpec) -> Self {
        let tm = TargetMatrices::new(spec);
        let z = DMatrix::zeros(tm.l, tm.l);
        RiccatiStepper {
            tm,
            k1: z.clone(),
            k2: z.clone(),
            k3: z.clone(),
            k4: z.clone(),
            stage: z.clone(),
            tmp: z,
        }
    }

    pub fn step(&mut self, w: &mut DMatrix<f64>, h: f64, eta0: f64, eta_mid: f64, eta1: f64) {
        self.tm.riccati_rhs(w, eta0, &mut self.tmp, &mut self.k1);
        self.stage.copy_from(w);
        linalg::mat_axpy(&mut self.stage, 0.5 * h, &self.k1);
        self.tm
            .riccati_rhs(&self.stage, eta_mid, &mut self.tmp, &mut self.k2);
        self.stage.copy_from(w);
        linalg::mat_axpy(&mut self.stage, 0.5 * h, &self.k2);
        self.tm
            .riccati_rhs(&self.stage, eta_mid, &mut self.tmp, &mut self.k3);
        self.stage.copy_from(w);
        linalg::mat_axpy(&mut self.stage, h, &self.k3);
        self.tm
            .riccati_rhs(&self.stage, eta1, &mut self.tmp, &mut self.k4);
        linalg::mat_axpy(w, h / 6.0, &self.k1);
        linalg::mat_axpy(w, h / 3.0, &self.k2);
        linalg::mat_axpy(w, h / 3.0, &self.k3);
        linalg::mat_axpy(w, h / 6.0, &self.k4);
        linalg::symmetrize(w);
    }
}

/// Propagate the covariance ODE from `omega0` over `span` time units, with
/// the sensed power sampled on the grid (step endpoints and midpoints).
pub fn propagate_covariance(
    target: &TargetSpec,
    eta: &[f64],
    omega0: &DMatrix<f64>,
    span: f64,
    grid: Grid,
) -> Result<CovarianceTrajectory> {
    if grid.steps() < 2 {
        return Err(Error::invalid("covariance propagation needs at least 2 steps"));
    }
    if eta.len() != grid.sample_count() {
        return Err(Error::invalid(format!(
            "expected {} power samples, got {}",
            grid.sample_count(),
            eta.len()
        )));
    }
    if span <= 0.0 {
        return Err(Error::invalid("time span must be positive"));
    }
    let l = target.state_dim();
    if omega0.shape() != (l, l) || !linalg::is_spd(omega0, 1e-8) {
        return Err(Error::invalid(format!(
            "initial covariance of target {} must be {l}x{l} symmetric positive definite",
            target.id
        )));
    }

    let mut stepper = RiccatiStepper::new(target);
    let mut w = omega0.clone();
    let mut matrices = Vec::with_capacity(grid.state_count());
    matrices.push(w.clone());
    let h = span / grid.steps() as f64;
    for m in 0..grid.steps() {
        stepper.step(&mut w, h, eta[2 * m], eta[2 * m + 1], eta[2 * m + 2]);
        let norm = w.norm();
        if !norm.is_finite() || norm > DIVERGENCE_GUARD {
            return Err(Error::Divergence {
                target: target.id,
                time: (m + 1) as f64 * h,
                norm,
            });
        }
        matrices.push(w.clone());
    }

    Ok(CovarianceTrajectory {
        target: target.id,
        span,
        grid,
        matrices,
        steady: false,
        periodic_residual: 0.0,
    })
}

#[derive(Debug, Clone)]
pub struct SteadyOptions {
    /// Frobenius residual over one period at which the map is converged.
    pub tol: f64,
    pub max_periods: usize,
    /// Initial map iterate; identity when absent.
    pub initial: Option<DMatrix<f64>>,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        SteadyOptions {
            tol: 1e-9,
            max_periods: 500,
            initial: None,
        }
    }
}

/// Unique attractive periodic covariance: iterate the one-period map of the
/// time-scaled Riccati flow until the endpoints agree, then record the final
/// period. The sensed power profile must be positive somewhere.
pub fn solve_periodic_riccati(
    target: &TargetSpec,
    eta: &[f64],
    period: f64,
    grid: Grid,
    opts: &SteadyOptions,
) -> Result<CovarianceTrajectory> {
    if eta.len() != grid.sample_count() {
        return Err(Error::invalid(format!(
            "expected {} power samples, got {}",
            grid.sample_count(),
            eta.len()
        )));
    }
    if period <= 0.0 {
        return Err(Error::invalid("period must be positive"));
    }
    if eta.iter().all(|v| *v <= 0.0) {
        return Err(Error::NeverVisited(target.id));
    }

    let l = target.state_dim();
    let mut stepper = RiccatiStepper::new(target);
    let mut start = opts
        .initial
        .clone()
        .unwrap_or_else(|| DMatrix::identity(l, l));
    let h = period / grid.steps() as f64;

    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_periods {
        let mut w = start.clone();
        for m in 0..grid.steps() {
            stepper.step(&mut w, h, eta[2 * m], eta[2 * m + 1], eta[2 * m + 2]);
            let norm = w.norm();
            if !norm.is_finite() || norm > DIVERGENCE_GUARD {
                return Err(Error::Divergence {
                    target: target.id,
                    time: (m + 1) as f64 * h,
                    norm,
                });
            }
        }
        residual = (&w - &start).norm();
        start = w;
        if residual <= opts.tol {
            // Record the converged period.
            let mut matrices = Vec::with_capacity(grid.state_count());
            let mut w = start.clone();
            matrices.push(w.clone());
            for m in 0..grid.steps() {
                stepper.step(&mut w, h, eta[2 * m], eta[2 * m + 1], eta[2 * m + 2]);
                matrices.push(w.clone());
            }
            let periodic_residual = (&matrices[grid.steps()] - &matrices[0]).norm();
            return Ok(CovarianceTrajectory {
                target: target.id,
                span: period,
                grid,
                matrices,
                steady: true,
                periodic_residual,
            });
        }
    }

    Err(Error::NonConvergence {
        target: target.id,
        periods: opts.max_periods,
        residual,
    })
}

/// Propagate two dominated power profiles from a common start and report the
/// largest eigenvalue of `omega1 - omega2` over the grid. The first profile
/// must dominate the second pointwise; the monotonicity property then makes
/// the difference negative semidefinite everywhere.
pub fn check_monotonicity(
    target: &TargetSpec,
    eta1: &[f64],
    eta2: &[f64],
    omega0: &DMatrix<f64>,
    span: f64,
    grid: Grid,
) -> Result<(bool, f64)> {
    if eta1.len() != eta2.len() {
        return Err(Error::invalid("power profiles differ in length"));
    }
    if eta1.iter().zip(eta2).any(|(a, b)| a < b) {
        return Err(Error::invalid(
            "dominance precondition violated: eta1 must be >= eta2 everywhere",
        ));
    }
    let t1 = propagate_covariance(target, eta1, omega0, span, grid)?;
    let t2 = propagate_covariance(target, eta2, omega0, span, grid)?;
    let mut worst = f64::NEG_INFINITY;
    for (m1, m2) in t1.matrices.iter().zip(t2.matrices.iter()) {
        worst = worst.max(linalg::max_eigenvalue(&(m1 - m2)));
    }
    Ok((worst <= 1e-8, worst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;
    use approx::assert_relative_eq;

    pub(crate) fn scalar_target(a: f64) -> TargetSpec {
        let text = format!(
            r#"{{
            "dimension": 1, "beta": 0.0, "mode": "steady",
            "targets": [{{"position": [0.0], "A": [[{a}]], "Q": [[1.0]],
                         "H": [[1.0]], "R": [[1.0]], "radius": 0.9}}],
            "agents": [{{"u_max": 1.0}}]
        }}"#
        );
        Scenario::from_json(&text).unwrap().targets.remove(0)
    }

    fn ones(grid: Grid, v: f64) -> Vec<f64> {
        vec![v; grid.sample_count()]
    }

    #[test]
    fn pure_growth_without_sensing() {
        // A = 0, Q = 1, eta = 0: omega(t) = omega0 + t.
        let target = scalar_target(0.0);
        let grid = Grid::new(100).unwrap();
        let traj =
            propagate_covariance(&target, &ones(grid, 0.0), &DMatrix::identity(1, 1), 2.0, grid)
                .unwrap();
        assert_relative_eq!(traj.matrices.last().unwrap()[(0, 0)], 3.0, epsilon = 1e-10);
    }

    #[test]
    fn equilibrium_is_preserved() {
        // A = 0, Q = G = 1, eta = 1: omega = 1 is a fixed point.
        let target = scalar_target(0.0);
        let grid = Grid::new(100).unwrap();
        let traj =
            propagate_covariance(&target, &ones(grid, 1.0), &DMatrix::identity(1, 1), 5.0, grid)
                .unwrap();
        for m in &traj.matrices {
            assert_relative_eq!(m[(0, 0)], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn converges_to_algebraic_riccati_root() {
        // A = -1, Q = G = 1, eta = 1: stationary root of -2w + 1 - w^2.
        let target = scalar_target(-1.0);
        let grid = Grid::new(2000).unwrap();
        let om0 = DMatrix::from_element(1, 1, 5.0);
        let traj = propagate_covariance(&target, &ones(grid, 1.0), &om0, 50.0, grid).unwrap();
        let expect = 2.0f64.sqrt() - 1.0;
        assert_relative_eq!(
            traj.matrices.last().unwrap()[(0, 0)],
            expect,
            epsilon = 1e-9
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        let target = scalar_target(0.0);
        let grid = Grid::new(10).unwrap();
        let id = DMatrix::identity(1, 1);
        assert!(propagate_covariance(&target, &ones(grid, 0.0), &id, -1.0, grid).is_err());
        assert!(
            propagate_covariance(&target, &ones(grid, 0.0), &DMatrix::from_element(1, 1, -1.0), 1.0, grid)
                .is_err()
        );
        let bad_eta = vec![0.0; 5];
        assert!(propagate_covariance(&target, &bad_eta, &id, 1.0, grid).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        // Unstable target, never sensed, long horizon: the norm guard trips.
        let target = scalar_target(0.5);
        let grid = Grid::new(200).unwrap();
        let err = propagate_covariance(
            &target,
            &ones(grid, 0.0),
            &DMatrix::identity(1, 1),
            80.0,
            grid,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Divergence { target: 0, .. }), "{err}");
    }

    #[test]
    fn periodic_constant_profiles() {
        let grid = Grid::new(500).unwrap();
        // A = 0: steady solution 1.
        let t0 = scalar_target(0.0);
        let s0 =
            solve_periodic_riccati(&t0, &ones(grid, 1.0), 1.0, grid, &SteadyOptions::default())
                .unwrap();
        assert_relative_eq!(s0.matrices[0][(0, 0)], 1.0, epsilon = 1e-6);
        assert!(s0.steady);
        assert!(s0.periodic_residual <= 1e-9);
        // A = -1: sqrt(2) - 1.
        let t1 = scalar_target(-1.0);
        let s1 =
            solve_periodic_riccati(&t1, &ones(grid, 1.0), 1.0, grid, &SteadyOptions::default())
                .unwrap();
        assert_relative_eq!(s1.matrices[0][(0, 0)], 2.0f64.sqrt() - 1.0, epsilon = 1e-6);
    }

    #[test]
    fn unvisited_target_is_an_error() {
        let target = scalar_target(0.0);
        let grid = Grid::new(50).unwrap();
        let err = solve_periodic_riccati(&target, &ones(grid, 0.0), 1.0, grid, &SteadyOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::NeverVisited(0)));
    }

    #[test]
    fn steady_restart_agrees() {
        // Piecewise profile: sensed for 30% of the period.
        let target = scalar_target(-0.2);
        let grid = Grid::new(800).unwrap();
        let eta: Vec<f64> = (0..grid.sample_count())
            .map(|k| if grid.sample_q(k) < 0.3 { 1.0 } else { 0.0 })
            .collect();
        let base = solve_periodic_riccati(&target, &eta, 2.0, grid, &SteadyOptions::default())
            .unwrap();
        for init in [DMatrix::from_element(1, 1, 10.0), DMatrix::from_element(1, 1, 0.05)] {
            let other = solve_periodic_riccati(
                &target,
                &eta,
                2.0,
                grid,
                &SteadyOptions {
                    initial: Some(init),
                    ..SteadyOptions::default()
                },
            )
            .unwrap();
            let diff: f64 = base
                .matrices
                .iter()
                .zip(other.matrices.iter())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(diff < 1e-7, "restart disagreement {diff}");
        }
    }

    #[test]
    fn monotonicity_on_scalar_profiles() {
        let target = scalar_target(0.0);
        let grid = Grid::new(200).unwrap();
        let id = DMatrix::identity(1, 1);
        // Equal profiles: zero difference.
        let (ok, worst) =
            check_monotonicity(&target, &ones(grid, 1.0), &ones(grid, 1.0), &id, 2.0, grid)
                .unwrap();
        assert!(ok);
        assert!(worst.abs() < 1e-12);
        // Full sensing vs none: 1 stays below 1 + t.
        let (ok, worst) =
            check_monotonicity(&target, &ones(grid, 1.0), &ones(grid, 0.0), &id, 2.0, grid)
                .unwrap();
        assert!(ok, "worst eigenvalue {worst}");
        // Violated precondition.
        assert!(
            check_monotonicity(&target, &ones(grid, 0.0), &ones(grid, 1.0), &id, 2.0, grid)
                .is_err()
        );
    }
}
