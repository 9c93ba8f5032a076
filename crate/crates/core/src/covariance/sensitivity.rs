//! Parameter sensitivities of covariance trajectories.
//!
//! Transient sensitivities integrate the variational equation of the Riccati
//! flow jointly with the covariance itself, so the stage values match and the
//! result is the exact derivative of the discretized propagation. Steady
//! sensitivities follow the periodic construction: a homogeneous transition
//! solution, a zero-initial forced solution, and a discrete Lyapunov fixed
//! point that restores periodicity.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg;
use crate::scenario::TargetSpec;

use super::lyapunov::solve_discrete_lyapunov;
use super::{CovarianceTrajectory, SensitivityTrajectory, TargetMatrices, DIVERGENCE_GUARD};

/// Forcing of one parameter's steady sensitivity: the sampled derivative of
/// the sensed power (when the parameter moves the trajectory) and the
/// derivative of the period.
#[derive(Debug, Clone, Copy)]
pub struct SensitivityForcing<'a> {
    pub deta: Option<&'a [f64]>,
    pub d_period: f64,
}

impl<'a> SensitivityForcing<'a> {
    pub fn is_zero(&self) -> bool {
        self.d_period == 0.0 && self.deta.map_or(true, |d| d.iter().all(|v| *v == 0.0))
    }
}

/// Scratch for evaluating sensitivity right-hand sides without allocating.
struct RhsWork {
    og: DMatrix<f64>,   // omega * G at the current stage
    go: DMatrix<f64>,   // G * omega (transpose of og)
    m: DMatrix<f64>,    // omega * G * omega
    ric: DMatrix<f64>,  // Riccati rhs at the current stage
    y: DMatrix<f64>,
    tmp: DMatrix<f64>,
}

impl RhsWork {
    fn new(l: usize) -> Self {
        let z = DMatrix::zeros(l, l);
        RhsWork {
            og: z.clone(),
            go: z.clone(),
            m: z.clone(),
            ric: z.clone(),
            y: z.clone(),
            tmp: z,
        }
    }

    /// Refresh the stage-shared products for covariance `w` and power `eta`.
    fn prepare(&mut self, tm: &TargetMatrices, w: &DMatrix<f64>, eta: f64) {
        self.og.gemm(1.0, w, &tm.g, 0.0);
        self.go.tr_copy_from(&self.og);
        self.m.gemm(1.0, &self.og, w, 0.0);
        tm.riccati_rhs(w, eta, &mut self.tmp, &mut self.ric);
    }

    /// Variational rhs shared by the transient and forced steady equations:
    /// `A s + s A' - eta (s G w + w G s) + c_eta * M + c_ric * ric`.
    fn sensitivity_rhs(
        &mut self,
        tm: &TargetMatrices,
        s: &DMatrix<f64>,
        eta: f64,
        c_eta: f64,
        c_ric: f64,
        out: &mut DMatrix<f64>,
    ) {
        out.gemm(1.0, &tm.a, s, 0.0);
        out.gemm(1.0, s, &tm.a_t, 1.0);
        if eta != 0.0 {
            // s G w + w G s = Y + Y' for symmetric s, w.
            self.y.gemm(1.0, s, &self.go, 0.0);
            let l = tm.l;
            for i in 0..l {
                for j in 0..l {
                    out[(i, j)] -= eta * (self.y[(i, j)] + self.y[(j, i)]);
                }
            }
        }
        if c_eta != 0.0 {
            linalg::mat_axpy(out, c_eta, &self.m);
        }
        if c_ric != 0.0 {
            linalg::mat_axpy(out, c_ric, &self.ric);
        }
    }

    /// Homogeneous transition rhs `(A - eta w G) s` (not symmetric).
    fn homogeneous_rhs(&mut self, tm: &TargetMatrices, s: &DMatrix<f64>, eta: f64, out: &mut DMatrix<f64>) {
        out.gemm(1.0, &tm.a, s, 0.0);
        if eta != 0.0 {
            out.gemm(-eta, &self.og, s, 1.0);
        }
    }
}

/// Transient covariance plus the trace integrals of its sensitivities.
pub struct TransientBatch {
    pub omega: CovarianceTrajectory,
    /// `int_0^span tr(sigma_d(t)) dt` per requested parameter.
    pub trace_integrals: Vec<f64>,
}

/// Jointly integrate the covariance and the sensitivity equations for a set
/// of parameters over `[0, span]`, starting from `sigma_d(0) = 0`. Only the
/// time integrals of the sensitivity traces are kept.
pub fn propagate_transient_sensitivities(
    target: &TargetSpec,
    eta: &[f64],
    deta: &[&[f64]],
    omega0: &DMatrix<f64>,
    span: f64,
    grid: Grid,
) -> Result<TransientBatch> {
    let (omega, _, integrals) =
        transient_joint(target, eta, deta, omega0, span, grid, false)?;
    Ok(TransientBatch {
        omega,
        trace_integrals: integrals,
    })
}

/// Single-parameter transient sensitivity with the full trajectory recorded.
/// The covariance trajectory must come from the same grid; its initial matrix
/// seeds the joint integration so stage values stay consistent.
pub fn propagate_transient_sensitivity(
    target: &TargetSpec,
    eta: &[f64],
    deta: &[f64],
    omega: &CovarianceTrajectory,
    span: f64,
    grid: Grid,
) -> Result<SensitivityTrajectory> {
    if omega.grid != grid || omega.matrices.len() != grid.state_count() {
        return Err(Error::invalid("covariance trajectory grid mismatch"));
    }
    let (_, mut stored, _) = transient_joint(
        target,
        eta,
        &[deta],
        &omega.matrices[0],
        span,
        grid,
        true,
    )?;
    Ok(SensitivityTrajectory {
        target: target.id,
        grid,
        sigma: stored.remove(0),
        sigma_h: Vec::new(),
        sigma_zi: Vec::new(),
        lambda: None,
    })
}

#[allow(clippy::type_complexity)]
fn transient_joint(
    target: &TargetSpec,
    eta: &[f64],
    deta: &[&[f64]],
    omega0: &DMatrix<f64>,
    span: f64,
    grid: Grid,
    store: bool,
) -> Result<(CovarianceTrajectory, Vec<Vec<DMatrix<f64>>>, Vec<f64>)> {
    let samples = grid.sample_count();
    if eta.len() != samples {
        return Err(Error::invalid("power samples do not match the grid"));
    }
    for d in deta {
        if d.len() != samples {
            return Err(Error::invalid("power derivative samples do not match the grid"));
        }
    }
    if span <= 0.0 {
        return Err(Error::invalid("time span must be positive"));
    }
    let l = target.state_dim();
    let tm = TargetMatrices::new(target);
    let n = deta.len();
    let h = span / grid.steps() as f64;
    let zero = DMatrix::zeros(l, l);

    let mut w = omega0.clone();
    let mut sigmas = vec![zero.clone(); n];
    let mut work = RhsWork::new(l);
    let mut k = [
        vec![zero.clone(); n + 1],
        vec![zero.clone(); n + 1],
        vec![zero.clone(); n + 1],
        vec![zero.clone(); n + 1],
    ];
    let mut stage = vec![zero.clone(); n + 1];

    let mut omega_nodes = Vec::with_capacity(grid.state_count());
    omega_nodes.push(w.clone());
    let mut stored: Vec<Vec<DMatrix<f64>>> = if store {
        (0..n).map(|_| vec![zero.clone()]).collect()
    } else {
        Vec::new()
    };
    // Trapezoid accumulators; sigma(0) = 0 contributes nothing.
    let mut integrals = vec![0.0; n];

    for m in 0..grid.steps() {
        let idx = [2 * m, 2 * m + 1, 2 * m + 1, 2 * m + 2];
        for s in 0..4 {
            let sample = idx[s];
            // Build the stage state.
            let coeff = match s {
                0 => 0.0,
                1 | 2 => 0.5 * h,
                _ => h,
            };
            if s == 0 {
                stage[0].copy_from(&w);
                for d in 0..n {
                    stage[d + 1].copy_from(&sigmas[d]);
                }
            } else {
                stage[0].copy_from(&w);
                linalg::mat_axpy(&mut stage[0], coeff, &k[s - 1][0]);
                for d in 0..n {
                    stage[d + 1].copy_from(&sigmas[d]);
                    linalg::mat_axpy(&mut stage[d + 1], coeff, &k[s - 1][d + 1]);
                }
            }
            work.prepare(&tm, &stage[0], eta[sample]);
            let (omega_k, sigma_k) = k[s].split_at_mut(1);
            omega_k[0].copy_from(&work.ric);
            for d in 0..n {
                work.sensitivity_rhs(
                    &tm,
                    &stage[d + 1],
                    eta[sample],
                    -deta[d][sample],
                    0.0,
                    &mut sigma_k[d],
                );
            }
        }
        let mut prev_traces = vec![0.0; n];
        for d in 0..n {
            prev_traces[d] = sigmas[d].trace();
        }
        for (state_idx, x) in std::iter::once(&mut w).chain(sigmas.iter_mut()).enumerate() {
            linalg::mat_axpy(x, h / 6.0, &k[0][state_idx]);
            linalg::mat_axpy(x, h / 3.0, &k[1][state_idx]);
            linalg::mat_axpy(x, h / 3.0, &k[2][state_idx]);
            linalg::mat_axpy(x, h / 6.0, &k[3][state_idx]);
            linalg::symmetrize(x);
        }
        let norm = w.norm();
        if !norm.is_finite() || norm > DIVERGENCE_GUARD {
            return Err(Error::Divergence {
                target: target.id,
                time: (m + 1) as f64 * h,
                norm,
            });
        }
        omega_nodes.push(w.clone());
        for d in 0..n {
            integrals[d] += 0.5 * h * (prev_traces[d] + sigmas[d].trace());
            if store {
                stored[d].push(sigmas[d].clone());
            }
        }
    }

    let omega = CovarianceTrajectory {
        target: target.id,
        span,
        grid,
        matrices: omega_nodes,
        steady: false,
        periodic_residual: 0.0,
    };
    Ok((omega, stored, integrals))
}

/// Steady sensitivity summary for a set of parameters of one target.
pub struct SteadyBatch {
    /// `int_0^1 tr(sigma_d(q)) dq` per requested parameter.
    pub trace_integrals: Vec<f64>,
    /// Homogeneous transition over one period.
    pub sigma_h_final: DMatrix<f64>,
    /// Its spectral radius (strictly below one for visited targets).
    pub rho: f64,
}

/// Core joint pass for the steady case: re-propagates the periodic
/// covariance from its recorded start together with the homogeneous solution
/// and the forced zero-initial solutions of every requested parameter.
#[allow(clippy::type_complexity)]
fn steady_joint(
    target: &TargetSpec,
    eta: &[f64],
    omega_bar: &CovarianceTrajectory,
    period: f64,
    forcings: &[SensitivityForcing<'_>],
    store: bool,
) -> Result<(
    Vec<DMatrix<f64>>,           // sigma_h at state nodes
    Vec<Vec<DMatrix<f64>>>,      // sigma_zi trajectories (when stored)
    Vec<DMatrix<f64>>,           // sigma_zi at q = 1
    Vec<f64>,                    // trapezoid of tr sigma_zi
)> {
    let grid = omega_bar.grid;
    let samples = grid.sample_count();
    if eta.len() != samples {
        return Err(Error::invalid("power samples do not match the grid"));
    }
    for f in forcings {
        if let Some(d) = f.deta {
            if d.len() != samples {
                return Err(Error::invalid(
                    "power derivative samples do not match the grid",
                ));
            }
        }
    }
    if !omega_bar.steady {
        return Err(Error::invalid(
            "steady sensitivities need a periodic covariance trajectory",
        ));
    }
    let l = target.state_dim();
    let tm = TargetMatrices::new(target);
    let n = forcings.len();
    let h = period / grid.steps() as f64;
    let zero = DMatrix::zeros(l, l);

    // State layout: omega, sigma_h, then one sigma_zi per forcing.
    let mut w = omega_bar.matrices[0].clone();
    let mut sh = DMatrix::identity(l, l);
    let mut szi = vec![zero.clone(); n];
    let mut work = RhsWork::new(l);
    let mut k = [
        vec![zero.clone(); n + 2],
        vec![zero.clone(); n + 2],
        vec![zero.clone(); n + 2],
        vec![zero.clone(); n + 2],
    ];
    let mut stage = vec![zero.clone(); n + 2];

    let mut sigma_h_nodes = Vec::with_capacity(grid.state_count());
    sigma_h_nodes.push(sh.clone());
    let mut stored: Vec<Vec<DMatrix<f64>>> = if store {
        (0..n).map(|_| vec![zero.clone()]).collect()
    } else {
        Vec::new()
    };
    let mut integrals = vec![0.0; n];

    for m in 0..grid.steps() {
        let idx = [2 * m, 2 * m + 1, 2 * m + 1, 2 * m + 2];
        for s in 0..4 {
            let sample = idx[s];
            let coeff = match s {
                0 => 0.0,
                1 | 2 => 0.5 * h,
                _ => h,
            };
            stage[0].copy_from(&w);
            stage[1].copy_from(&sh);
            for d in 0..n {
                stage[d + 2].copy_from(&szi[d]);
            }
            if s > 0 {
                for (i, st) in stage.iter_mut().enumerate() {
                    linalg::mat_axpy(st, coeff, &k[s - 1][i]);
                }
            }
            work.prepare(&tm, &stage[0], eta[sample]);
            let ks = &mut k[s];
            // Covariance and homogeneous parts.
            ks[0].copy_from(&work.ric);
            work.homogeneous_rhs(&tm, &stage[1], eta[sample], &mut ks[1]);
            // Forced solutions: [2 + d].
            for (d, f) in forcings.iter().enumerate() {
                let c_eta = match f.deta {
                    Some(rows) => -rows[sample],
                    None => 0.0,
                };
                let c_ric = f.d_period / period;
                work.sensitivity_rhs(&tm, &stage[d + 2], eta[sample], c_eta, c_ric, &mut ks[d + 2]);
            }
        }
        let mut prev_traces = vec![0.0; n];
        for d in 0..n {
            prev_traces[d] = szi[d].trace();
        }
        for (i, x) in std::iter::once(&mut w)
            .chain(std::iter::once(&mut sh))
            .chain(szi.iter_mut())
            .enumerate()
        {
            linalg::mat_axpy(x, h / 6.0, &k[0][i]);
            linalg::mat_axpy(x, h / 3.0, &k[1][i]);
            linalg::mat_axpy(x, h / 3.0, &k[2][i]);
            linalg::mat_axpy(x, h / 6.0, &k[3][i]);
            if i != 1 {
                // The transition matrix is not symmetric; everything else is.
                linalg::symmetrize(x);
            }
        }
        let norm = w.norm();
        if !norm.is_finite() || norm > DIVERGENCE_GUARD {
            return Err(Error::Divergence {
                target: target.id,
                time: (m + 1) as f64 * h,
                norm,
            });
        }
        sigma_h_nodes.push(sh.clone());
        for d in 0..n {
            // Trapezoid in q: physical step h over period.
            integrals[d] += 0.5 * (h / period) * (prev_traces[d] + szi[d].trace());
            if store {
                stored[d].push(szi[d].clone());
            }
        }
    }

    Ok((sigma_h_nodes, stored, szi, integrals))
}

/// Homogeneous and zero-initial forced solutions for one parameter.
pub fn integrate_auxiliary(
    target: &TargetSpec,
    eta: &[f64],
    omega_bar: &CovarianceTrajectory,
    deta: Option<&[f64]>,
    d_period: f64,
    period: f64,
) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
    let forcing = SensitivityForcing { deta, d_period };
    let (sigma_h, mut stored, _, _) =
        steady_joint(target, eta, omega_bar, period, &[forcing], true)?;
    Ok((sigma_h, stored.remove(0)))
}

/// Full steady sensitivity of one parameter: solves the auxiliary problems,
/// the discrete Lyapunov equation for the periodic initial condition, and
/// assembles `sigma(q) = sigma_h(q) lambda sigma_h(q)' + sigma_zi(q)`.
pub fn steady_state_sensitivity(
    target: &TargetSpec,
    eta: &[f64],
    omega_bar: &CovarianceTrajectory,
    deta: Option<&[f64]>,
    d_period: f64,
    period: f64,
) -> Result<SensitivityTrajectory> {
    let (sigma_h, sigma_zi) =
        integrate_auxiliary(target, eta, omega_bar, deta, d_period, period)?;
    let sh1 = sigma_h.last().expect("nonempty grid").clone();
    let zi1 = sigma_zi.last().expect("nonempty grid").clone();
    let lambda = solve_discrete_lyapunov(target.id, &sh1, &zi1)?;
    let mut sigma = Vec::with_capacity(sigma_h.len());
    for (shq, ziq) in sigma_h.iter().zip(sigma_zi.iter()) {
        let mut s = shq * &lambda * shq.transpose();
        s += ziq;
        linalg::symmetrize(&mut s);
        sigma.push(s);
    }
    Ok(SensitivityTrajectory {
        target: target.id,
        grid: omega_bar.grid,
        sigma,
        sigma_h,
        sigma_zi,
        lambda: Some(lambda),
    })
}

/// Batched steady sensitivities: one joint pass for all parameters, then the
/// periodic assembly reduced to the trace integrals the cost gradient needs.
/// Uses `int tr(sigma_h lambda sigma_h') dq = tr(lambda * int sigma_h' sigma_h dq)`.
pub fn steady_sensitivity_batch(
    target: &TargetSpec,
    eta: &[f64],
    omega_bar: &CovarianceTrajectory,
    period: f64,
    forcings: &[SensitivityForcing<'_>],
) -> Result<SteadyBatch> {
    let (sigma_h, _, zi_finals, zi_integrals) =
        steady_joint(target, eta, omega_bar, period, forcings, false)?;
    let grid = omega_bar.grid;
    let sh1 = sigma_h.last().expect("nonempty grid");
    let rho = linalg::spectral_radius(sh1);

    // S1 = int_0^1 sigma_h' sigma_h dq by the trapezoid rule.
    let l = target.state_dim();
    let mut s1 = DMatrix::zeros(l, l);
    let hq = grid.h();
    for (node, shq) in sigma_h.iter().enumerate() {
        let weight = if node == 0 || node == grid.steps() {
            0.5 * hq
        } else {
            hq
        };
        s1.gemm_tr(weight, shq, shq, 1.0);
    }

    let mut trace_integrals = Vec::with_capacity(forcings.len());
    for (d, f) in forcings.iter().enumerate() {
        if f.is_zero() {
            trace_integrals.push(0.0);
            continue;
        }
        let lambda = solve_discrete_lyapunov(target.id, sh1, &zi_finals[d])?;
        trace_integrals.push((&lambda * &s1).trace() + zi_integrals[d]);
    }
    Ok(SteadyBatch {
        trace_integrals,
        sigma_h_final: sh1.clone(),
        rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::riccati::{propagate_covariance, solve_periodic_riccati, SteadyOptions};
    use crate::scenario::Scenario;
    use approx::assert_relative_eq;

    fn scalar_target(a: f64) -> TargetSpec {
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

    fn paper_2x2_target() -> TargetSpec {
        Scenario::from_json(
            r#"{
            "dimension": 1, "beta": 0.0, "mode": "steady",
            "targets": [{"position": [0.0],
                         "A": [[-1.0, -0.1], [-0.1, 0.01]],
                         "Q": [[1.0, 0.0], [0.0, 1.0]],
                         "H": [[1.0, 0.0], [0.0, 1.0]],
                         "R": [[1.0, 0.0], [0.0, 1.0]],
                         "radius": 0.9}],
            "agents": [{"u_max": 1.0}]
        }"#,
        )
        .unwrap()
        .targets
        .remove(0)
    }

    fn window_eta(grid: Grid, lo: f64, hi: f64) -> Vec<f64> {
        (0..grid.sample_count())
            .map(|k| {
                let q = grid.sample_q(k);
                if q >= lo && q <= hi {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }

    #[test]
    fn zero_forcing_gives_zero_transient_sensitivity() {
        let target = scalar_target(-0.5);
        let grid = Grid::new(100).unwrap();
        let eta = vec![1.0; grid.sample_count()];
        let deta = vec![0.0; grid.sample_count()];
        let omega =
            propagate_covariance(&target, &eta, &DMatrix::identity(1, 1), 2.0, grid).unwrap();
        let sens =
            propagate_transient_sensitivity(&target, &eta, &deta, &omega, 2.0, grid).unwrap();
        for s in &sens.sigma {
            assert_relative_eq!(s[(0, 0)], 0.0);
        }
    }

    /// Scalar transient sensitivity against a finite difference of the
    /// propagation with a scaled power profile.
    #[test]
    fn transient_sensitivity_matches_finite_difference_scalar() {
        let target = scalar_target(-0.3);
        let grid = Grid::new(400).unwrap();
        let span = 3.0;
        let base: Vec<f64> = (0..grid.sample_count())
            .map(|k| 0.5 + 0.4 * (std::f64::consts::TAU * grid.sample_q(k)).sin())
            .collect();
        // Parameter: global scale of the profile, at scale = 1.
        let omega0 = DMatrix::identity(1, 1);
        let omega = propagate_covariance(&target, &base, &omega0, span, grid).unwrap();
        let sens =
            propagate_transient_sensitivity(&target, &base, &base, &omega, span, grid).unwrap();
        let h = 1e-5;
        let up: Vec<f64> = base.iter().map(|v| v * (1.0 + h)).collect();
        let dn: Vec<f64> = base.iter().map(|v| v * (1.0 - h)).collect();
        let tu = propagate_covariance(&target, &up, &omega0, span, grid).unwrap();
        let td = propagate_covariance(&target, &dn, &omega0, span, grid).unwrap();
        for node in [grid.steps() / 4, grid.steps() / 2, grid.steps()] {
            let fd = (tu.matrices[node][(0, 0)] - td.matrices[node][(0, 0)]) / (2.0 * h);
            let got = sens.sigma[node][(0, 0)];
            assert!(
                (fd - got).abs() <= 1e-4 * fd.abs().max(1.0),
                "node {node}: fd {fd} vs sigma {got}"
            );
        }
    }

    #[test]
    fn transient_sensitivity_matches_finite_difference_2x2() {
        let target = paper_2x2_target();
        let grid = Grid::new(400).unwrap();
        let span = 2.0;
        let base = window_eta(grid, 0.2, 0.6);
        let omega0 = DMatrix::identity(2, 2);
        let omega = propagate_covariance(&target, &base, &omega0, span, grid).unwrap();
        let sens =
            propagate_transient_sensitivity(&target, &base, &base, &omega, span, grid).unwrap();
        let h = 1e-5;
        let up: Vec<f64> = base.iter().map(|v| v * (1.0 + h)).collect();
        let dn: Vec<f64> = base.iter().map(|v| v * (1.0 - h)).collect();
        let tu = propagate_covariance(&target, &up, &omega0, span, grid).unwrap();
        let td = propagate_covariance(&target, &dn, &omega0, span, grid).unwrap();
        let node = grid.steps();
        for i in 0..2 {
            for j in 0..2 {
                let fd = (tu.matrices[node][(i, j)] - td.matrices[node][(i, j)]) / (2.0 * h);
                let got = sens.sigma[node][(i, j)];
                assert!(
                    (fd - got).abs() <= 1e-4 * fd.abs().max(1.0),
                    "entry ({i},{j}): fd {fd} vs sigma {got}"
                );
            }
        }
    }

    #[test]
    fn homogeneous_scalar_decay() {
        // Constant eta = 1, A = 0, Q = G = 1: steady omega = 1, F = -1, so
        // sigma_h(1) = exp(-T) with T = 1.
        let target = scalar_target(0.0);
        let grid = Grid::new(400).unwrap();
        let eta = vec![1.0; grid.sample_count()];
        let bar = solve_periodic_riccati(&target, &eta, 1.0, grid, &SteadyOptions::default())
            .unwrap();
        let (sh, zi) = integrate_auxiliary(&target, &eta, &bar, None, 0.0, 1.0).unwrap();
        assert_relative_eq!(sh.last().unwrap()[(0, 0)], (-1.0f64).exp(), epsilon = 1e-9);
        assert_relative_eq!(sh[0][(0, 0)], 1.0);
        for z in &zi {
            assert_relative_eq!(z[(0, 0)], 0.0);
        }
    }

    #[test]
    fn homogeneous_matches_matrix_exponential_for_constant_eta() {
        // With constant eta the steady covariance is constant, F is constant
        // and sigma_h(1) = exp(T F).
        let target = paper_2x2_target();
        let grid = Grid::new(800).unwrap();
        let eta = vec![0.8; grid.sample_count()];
        let period = 1.7;
        let bar = solve_periodic_riccati(&target, &eta, period, grid, &SteadyOptions::default())
            .unwrap();
        let (sh, _) = integrate_auxiliary(&target, &eta, &bar, None, 0.0, period).unwrap();
        let f = &target.a - 0.8 * &bar.matrices[0] * target.gain();
        let expm = (period * f).exp();
        assert!((sh.last().unwrap() - &expm).norm() < 1e-8);
    }

    #[test]
    fn steady_sensitivity_scalar_implicit_function() {
        // Constant eta: the steady scalar solves 2 a w + 1 - eta w^2 = 0.
        // Differentiating in eta: dw/deta = w^2 / (2a - 2 eta w)^{-1}... the
        // implicit-function value is g w^2 / (2 (a - eta w)) with g = 1.
        let a = -0.4;
        let target = scalar_target(a);
        let grid = Grid::new(600).unwrap();
        let eta0 = 0.7;
        let eta = vec![eta0; grid.sample_count()];
        let period = 1.3;
        let bar = solve_periodic_riccati(&target, &eta, period, grid, &SteadyOptions::default())
            .unwrap();
        let w = bar.matrices[0][(0, 0)];
        // Parameter: global power scale at 1, so deta/dtheta = eta profile
        // and dw/dtheta = eta0 * dw/deta by the implicit function theorem.
        let sens =
            steady_state_sensitivity(&target, &eta, &bar, Some(&eta), 0.0, period).unwrap();
        let expect = eta0 * w * w / (2.0 * (a - eta0 * w));
        for s in &sens.sigma {
            assert_relative_eq!(s[(0, 0)], expect, epsilon = 1e-7);
        }
        // Periodicity of the assembled sensitivity.
        let first = sens.sigma.first().unwrap()[(0, 0)];
        let last = sens.sigma.last().unwrap()[(0, 0)];
        assert!((first - last).abs() < 1e-7);
    }

    #[test]
    fn steady_sensitivity_matches_finite_difference_of_periodic_solve() {
        let target = paper_2x2_target();
        let grid = Grid::new(500).unwrap();
        let period = 2.0;
        let base = window_eta(grid, 0.1, 0.45);
        let opts = SteadyOptions::default();
        let bar = solve_periodic_riccati(&target, &base, period, grid, &opts).unwrap();
        let sens = steady_state_sensitivity(&target, &base, &bar, Some(&base), 0.0, period)
            .unwrap();
        let h = 1e-5;
        let up: Vec<f64> = base.iter().map(|v| v * (1.0 + h)).collect();
        let dn: Vec<f64> = base.iter().map(|v| v * (1.0 - h)).collect();
        let bu = solve_periodic_riccati(&target, &up, period, grid, &opts).unwrap();
        let bd = solve_periodic_riccati(&target, &dn, period, grid, &opts).unwrap();
        for node in [0, grid.steps() / 3, grid.steps()] {
            for i in 0..2 {
                for j in 0..2 {
                    let fd =
                        (bu.matrices[node][(i, j)] - bd.matrices[node][(i, j)]) / (2.0 * h);
                    let got = sens.sigma[node][(i, j)];
                    assert!(
                        (fd - got).abs() <= 1e-3 * fd.abs().max(1e-3),
                        "node {node} entry ({i},{j}): fd {fd} vs {got}"
                    );
                }
            }
        }
    }

    #[test]
    fn batch_matches_per_parameter_assembly() {
        let target = paper_2x2_target();
        let grid = Grid::new(300).unwrap();
        let period = 1.5;
        let base = window_eta(grid, 0.3, 0.8);
        let bar = solve_periodic_riccati(&target, &base, period, grid, &SteadyOptions::default())
            .unwrap();
        let deta: Vec<f64> = base.iter().map(|v| 0.5 * v).collect();
        let forcings = [
            SensitivityForcing { deta: Some(&deta), d_period: 0.0 },
            SensitivityForcing { deta: None, d_period: 1.0 },
            SensitivityForcing { deta: None, d_period: 0.0 },
        ];
        let batch =
            steady_sensitivity_batch(&target, &base, &bar, period, &forcings).unwrap();
        assert!(batch.rho < 1.0);
        assert_eq!(batch.trace_integrals[2], 0.0);
        for (d, f) in forcings.iter().enumerate().take(2) {
            let sens =
                steady_state_sensitivity(&target, &base, &bar, f.deta, f.d_period, period)
                    .unwrap();
            let traces: Vec<f64> = sens.sigma.iter().map(|m| m.trace()).collect();
            let direct = grid.trapezoid(&traces);
            assert_relative_eq!(batch.trace_integrals[d], direct, epsilon = 1e-9);
        }
    }
}
