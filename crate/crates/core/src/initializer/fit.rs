//! Waypoint-constrained Fourier coefficients for a visit schedule.
//!
//! For each agent the tour gives waypoint times proportional to traveled
//! distance; the fit finds coefficients whose curve passes within a margin
//! of every scheduled target at its waypoint time while minimizing a
//! frequency-weighted absolute-coefficient objective (heavier harmonics cost
//! more, which keeps the initial curves smooth). The weighted-L1 objective
//! with norm-ball constraints is solved by an augmented Lagrangian with
//! proximal (soft-threshold) steps; a least-squares fit of the straight-line
//! tour seeds the solve.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fourier::{AgentFourier, ParamsFourier};
use crate::scenario::Scenario;

use super::Schedule;

#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Waypoint margin: the curve must pass within `(1 - delta) r` of each
    /// scheduled target.
    pub delta: f64,
    /// Constraint tolerance of the solver and the final feasibility check.
    pub tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            delta: 0.1,
            tol: 1e-8,
            max_outer: 80,
            max_inner: 600,
        }
    }
}

/// Fit one Fourier agent per tour. The period is set to one; the start
/// position coincides with the first scheduled target.
pub fn fourier_fit(
    schedule: &Schedule,
    scenario: &Scenario,
    frequencies: &[u32],
    config: &FitConfig,
) -> Result<ParamsFourier> {
    if !(0.0..1.0).contains(&config.delta) || config.delta <= 0.0 {
        return Err(Error::invalid("delta must lie strictly between 0 and 1"));
    }
    if schedule.tours.len() != scenario.agents.len() {
        return Err(Error::invalid("schedule does not match the agent roster"));
    }
    let dim = scenario.dim;
    let k = frequencies.len();
    let mut agents = Vec::with_capacity(schedule.tours.len());
    for (j, tour) in schedule.tours.iter().enumerate() {
        if tour.targets.is_empty() {
            let park = j % scenario.targets.len();
            agents.push(AgentFourier {
                s0: scenario.targets[park].position.iter().cloned().collect(),
                a: vec![vec![0.0; k]; dim],
                b: vec![vec![0.0; k]; dim],
            });
            continue;
        }
        agents.push(fit_agent(j, tour, scenario, frequencies, config)?);
    }
    ParamsFourier::new(1.0, frequencies.to_vec(), agents, dim)
}

struct Waypoint {
    /// Offset target position relative to the start, so the constraint reads
    /// `|E z - c| <= rho`.
    c: DVector<f64>,
    rho: f64,
    basis: DMatrix<f64>,
}

fn fit_agent(
    agent: usize,
    tour: &super::AgentTour,
    scenario: &Scenario,
    frequencies: &[u32],
    config: &FitConfig,
) -> Result<AgentFourier> {
    let dim = scenario.dim;
    let k = frequencies.len();
    let nvar = 2 * k * dim;
    let s0 = scenario.targets[tour.targets[0]].position.clone();

    // Waypoints at distance-proportional times.
    let total = tour.total;
    let mut waypoints = Vec::with_capacity(tour.targets.len());
    for (m, &target) in tour.targets.iter().enumerate() {
        let q = if total > 0.0 { tour.cumulative[m] / total } else { 0.0 };
        let spec = &scenario.targets[target];
        waypoints.push(Waypoint {
            c: &spec.position - &s0,
            rho: (1.0 - config.delta) * spec.radii[agent],
            basis: basis_matrix(frequencies, dim, q),
        });
    }

    // Weighted-L1 objective: harmonic index weights both coefficient kinds.
    let mut weights = vec![0.0; nvar];
    for p in 0..dim {
        for (kk, &f) in frequencies.iter().enumerate() {
            weights[axis_a(p, kk, k)] = f as f64;
            weights[axis_b(p, kk, k)] = f as f64;
        }
    }

    let mut z = least_squares_seed(tour, scenario, frequencies, &s0, nvar);

    // Augmented Lagrangian on g_m(z) = |E_m z - c_m| - rho_m <= 0.
    let mut lambda = vec![0.0; waypoints.len()];
    let mut mu = 10.0;
    // Lipschitz bound of the smooth part: mu * sum |E_m|^2.
    let basis_norm2: f64 = waypoints.iter().map(|w| w.basis.norm_squared()).sum();

    let mut grad = DVector::zeros(nvar);
    let mut residuals: Vec<DVector<f64>> = waypoints.iter().map(|w| w.c.clone()).collect();
    for _outer in 0..config.max_outer {
        let alpha = 1.0 / (mu * basis_norm2 + 1.0);
        for _inner in 0..config.max_inner {
            grad.fill(0.0);
            for (m, w) in waypoints.iter().enumerate() {
                residuals[m].gemv(1.0, &w.basis, &z, 0.0);
                residuals[m] -= &w.c;
                let norm = residuals[m].norm();
                let g = norm - w.rho;
                let slope = mu * (g + lambda[m] / mu).max(0.0);
                if slope > 0.0 && norm > 1e-14 {
                    grad.gemv_tr(slope / norm, &w.basis, &residuals[m], 1.0);
                }
            }
            let mut moved: f64 = 0.0;
            for i in 0..nvar {
                let old = z[i];
                let shifted = z[i] - alpha * grad[i];
                let thresh = alpha * weights[i];
                z[i] = shifted.signum() * (shifted.abs() - thresh).max(0.0);
                moved = moved.max((z[i] - old).abs());
            }
            if moved < 1e-12 {
                break;
            }
        }
        let mut worst = 0.0f64;
        for (m, w) in waypoints.iter().enumerate() {
            let mut r = w.basis.clone() * &z;
            r -= &w.c;
            let g = r.norm() - w.rho;
            lambda[m] = (lambda[m] + mu * g).max(0.0);
            worst = worst.max(g);
        }
        if worst <= config.tol * 0.1 {
            break;
        }
        mu *= 1.6;
    }

    // Independent feasibility check of the fitted curve.
    let mut worst = 0.0f64;
    for w in &waypoints {
        let mut r = w.basis.clone() * &z;
        r -= &w.c;
        worst = worst.max(r.norm() - w.rho);
    }
    if worst > config.tol {
        return Err(Error::FitInfeasible {
            agent,
            violation: worst,
            k,
        });
    }

    let mut a = vec![vec![0.0; k]; dim];
    let mut b = vec![vec![0.0; k]; dim];
    for p in 0..dim {
        for kk in 0..k {
            a[p][kk] = z[axis_a(p, kk, k)];
            b[p][kk] = z[axis_b(p, kk, k)];
        }
    }
    Ok(AgentFourier {
        s0: s0.iter().cloned().collect(),
        a,
        b,
    })
}

fn axis_a(axis: usize, harmonic: usize, k: usize) -> usize {
    axis * 2 * k + harmonic
}

fn axis_b(axis: usize, harmonic: usize, k: usize) -> usize {
    axis * 2 * k + k + harmonic
}

/// Rows map coefficients to the position offset at normalized time `q`.
fn basis_matrix(frequencies: &[u32], dim: usize, q: f64) -> DMatrix<f64> {
    let k = frequencies.len();
    let mut e = DMatrix::zeros(dim, 2 * k * dim);
    for (kk, &f) in frequencies.iter().enumerate() {
        let arg = TAU * f as f64 * q;
        let (sin, cos) = arg.sin_cos();
        for p in 0..dim {
            e[(p, axis_a(p, kk, k))] = sin;
            e[(p, axis_b(p, kk, k))] = cos - 1.0;
        }
    }
    e
}

/// Least-squares projection of the straight-line tour onto the basis; a
/// smooth, nearly feasible warm start.
fn least_squares_seed(
    tour: &super::AgentTour,
    scenario: &Scenario,
    frequencies: &[u32],
    s0: &DVector<f64>,
    nvar: usize,
) -> DVector<f64> {
    let dim = scenario.dim;
    if tour.total <= 0.0 {
        return DVector::zeros(nvar);
    }
    let samples = 64.max(8 * tour.targets.len());
    let mut normal = DMatrix::zeros(nvar, nvar);
    let mut rhs = DVector::zeros(nvar);
    for t in 0..samples {
        let q = t as f64 / samples as f64;
        let e = basis_matrix(frequencies, dim, q);
        let path = polyline_position(tour, scenario, q) - s0;
        normal.gemm_tr(1.0, &e, &e, 1.0);
        rhs.gemv_tr(1.0, &e, &path, 1.0);
    }
    // Tikhonov-damped normal equations keep the seed tame when the basis is
    // nearly collinear at the sample times.
    for i in 0..nvar {
        normal[(i, i)] += 1e-9;
    }
    normal
        .cholesky()
        .map(|c| c.solve(&rhs))
        .unwrap_or_else(|| DVector::zeros(nvar))
}

/// Position along the cyclic straight-line tour at arc-length fraction `q`.
fn polyline_position(tour: &super::AgentTour, scenario: &Scenario, q: f64) -> DVector<f64> {
    let n = tour.targets.len();
    let want = q * tour.total;
    for m in 0..n {
        let start = tour.cumulative[m];
        let (end, next) = if m + 1 < n {
            (tour.cumulative[m + 1], tour.targets[m + 1])
        } else {
            (tour.total, tour.targets[0])
        };
        if want <= end || m == n - 1 {
            let a = &scenario.targets[tour.targets[m]].position;
            let b = &scenario.targets[next].position;
            let span = end - start;
            let frac = if span > 0.0 {
                ((want - start) / span).clamp(0.0, 1.0)
            } else {
                0.0
            };
            return a + (b - a) * frac;
        }
    }
    scenario.targets[tour.targets[0]].position.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::fourier_position;
    use crate::initializer::{mtsp_solve, GaConfig};
    use approx::assert_relative_eq;

    fn three_target_scenario() -> Scenario {
        Scenario::from_json(
            r#"{
            "dimension": 2, "beta": 0.0, "mode": "steady",
            "targets": [
                {"position": [0.0, 0.5], "A": [[-1.0, -0.1], [-0.1, 0.01]],
                 "Q": [[1.0, 0.0], [0.0, 1.0]], "H": [[1.0, 0.0], [0.0, 1.0]],
                 "R": [[1.0, 0.0], [0.0, 1.0]], "radius": 0.5},
                {"position": [0.5, 0.0], "A": [[-1.0, -0.1], [-0.1, 0.01]],
                 "Q": [[1.0, 0.0], [0.0, 1.0]], "H": [[1.0, 0.0], [0.0, 1.0]],
                 "R": [[1.0, 0.0], [0.0, 1.0]], "radius": 0.5},
                {"position": [-0.5, 0.0], "A": [[-1.0, -0.1], [-0.1, 0.01]],
                 "Q": [[1.0, 0.0], [0.0, 1.0]], "H": [[1.0, 0.0], [0.1, 1.0]],
                 "R": [[1.0, 0.0], [0.0, 1.0]], "radius": 0.5}
            ],
            "agents": [{"u_max": "unbounded"}]
        }"#,
        )
        .unwrap()
    }

    #[test]
    fn single_target_fit_is_zero() {
        let scenario = Scenario::from_json(
            r#"{
            "dimension": 2, "beta": 0.0, "mode": "steady",
            "targets": [{"position": [0.3, -0.2], "A": [[-1.0]], "Q": [[1.0]],
                         "H": [[1.0]], "R": [[1.0]], "radius": 0.5}],
            "agents": [{"u_max": "unbounded"}]
        }"#,
        )
        .unwrap();
        let schedule = mtsp_solve(
            &[scenario.targets[0].position.clone()],
            1,
            &GaConfig { generations: 10, seed: 0, ..GaConfig::default() },
        )
        .unwrap();
        let params =
            fourier_fit(&schedule, &scenario, &[1, 2, 3, 4, 5], &FitConfig::default()).unwrap();
        assert_relative_eq!(params.agents[0].s0[0], 0.3);
        assert_relative_eq!(params.agents[0].s0[1], -0.2);
        for p in 0..2 {
            for kk in 0..5 {
                assert_relative_eq!(params.agents[0].a[p][kk], 0.0, epsilon = 1e-9);
                assert_relative_eq!(params.agents[0].b[p][kk], 0.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn three_targets_fit_satisfies_waypoints() {
        let scenario = three_target_scenario();
        let positions: Vec<_> = scenario.targets.iter().map(|t| t.position.clone()).collect();
        let schedule = mtsp_solve(
            &positions,
            1,
            &GaConfig { generations: 300, seed: 2, ..GaConfig::default() },
        )
        .unwrap();
        let config = FitConfig::default();
        let params = fourier_fit(&schedule, &scenario, &[1, 2, 3, 4, 5], &config).unwrap();
        // Independent re-evaluation of every waypoint constraint.
        let tour = &schedule.tours[0];
        for (m, &target) in tour.targets.iter().enumerate() {
            let q = tour.cumulative[m] / tour.total;
            let pos = fourier_position(&params, 0, q);
            let spec = &scenario.targets[target];
            let d = (pos[0] - spec.position[0]).hypot(pos[1] - spec.position[1]);
            let bound = (1.0 - config.delta) * spec.radii[0];
            assert!(
                d <= bound + 1e-7,
                "waypoint {m} (target {target}): distance {d} > {bound}"
            );
        }
    }

    #[test]
    fn objective_weakly_increases_with_delta() {
        let scenario = three_target_scenario();
        let positions: Vec<_> = scenario.targets.iter().map(|t| t.position.clone()).collect();
        let schedule = mtsp_solve(
            &positions,
            1,
            &GaConfig { generations: 300, seed: 2, ..GaConfig::default() },
        )
        .unwrap();
        let objective = |params: &ParamsFourier| -> f64 {
            let mut total = 0.0;
            for p in 0..2 {
                for (kk, &f) in params.frequencies.iter().enumerate() {
                    total += f as f64
                        * (params.agents[0].a[p][kk].abs() + params.agents[0].b[p][kk].abs());
                }
            }
            total
        };
        let mut last = -1.0;
        for delta in [0.05, 0.1, 0.2] {
            let config = FitConfig { delta, ..FitConfig::default() };
            let params = fourier_fit(&schedule, &scenario, &[1, 2, 3, 4, 5], &config).unwrap();
            let obj = objective(&params);
            assert!(
                obj >= last - 1e-4,
                "objective decreased with delta: {obj} < {last}"
            );
            last = obj;
        }
    }
}
