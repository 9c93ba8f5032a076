//! Monte Carlo validation of the covariance dynamics: simulate the target
//! state and its optimal estimator with Euler-Maruyama and compare the
//! empirical squared error against the propagated covariance trace.

use nalgebra::DVector;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::linalg::psd_sqrt;
use crate::scenario::TargetSpec;

use super::riccati::propagate_covariance;

#[derive(Debug, Clone)]
pub struct FilterConfig {
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    /// Disable all noise draws and start with a perfect estimate; the error
    /// must then vanish identically.
    pub zero_noise: bool,
}

/// One recorded trajectory of the simulation (the first path).
#[derive(Debug, Clone)]
pub struct SamplePath {
    pub times: Vec<f64>,
    pub state: Vec<Vec<f64>>,
    pub estimate: Vec<Vec<f64>>,
    pub error: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct FilterStats {
    pub target: usize,
    /// Mean over paths and time of `e' e`.
    pub empirical_mse: f64,
    /// Time average of `tr(omega)` from the propagated covariance.
    pub covariance_mse: f64,
    /// Largest error component seen anywhere (exactly zero in a zero-noise
    /// run with a perfect initial estimate).
    pub max_abs_error: f64,
    pub path_seeds: Vec<u64>,
    pub sample_path: SamplePath,
}

impl FilterStats {
    pub fn relative_deviation(&self) -> f64 {
        (self.empirical_mse - self.covariance_mse).abs() / self.covariance_mse.max(1e-300)
    }
}

/// Simulate the Kalman-Bucy filter for one target under per-agent sensing
/// gain profiles sampled on the grid.
pub fn simulate_kalman_bucy(
    target: &TargetSpec,
    gammas: &[Vec<f64>],
    config: &FilterConfig,
    grid: Grid,
) -> Result<FilterStats> {
    if config.paths == 0 {
        return Err(Error::invalid("at least one sample path required"));
    }
    if config.horizon <= 0.0 {
        return Err(Error::invalid("simulation horizon must be positive"));
    }
    if gammas.len() != target.radii.len() {
        return Err(Error::invalid(format!(
            "expected {} per-agent gain profiles, got {}",
            target.radii.len(),
            gammas.len()
        )));
    }
    let samples = grid.sample_count();
    if gammas.iter().any(|g| g.len() != samples) {
        return Err(Error::invalid("gain profiles do not match the grid"));
    }

    let eta: Vec<f64> = (0..samples)
        .map(|k| gammas.iter().map(|g| g[k] * g[k]).sum())
        .collect();
    let omega0 = target.initial_covariance();
    let cov = propagate_covariance(target, &eta, &omega0, config.horizon, grid)?;
    let traces: Vec<f64> = cov.traces();
    let covariance_mse = grid.trapezoid(&traces); // grid q in [0,1] scales out

    let l = target.state_dim();
    let m_dim = target.h.nrows();
    let n_agents = gammas.len();
    let steps = grid.steps();
    let dt = config.horizon / steps as f64;
    let sqrt_dt = dt.sqrt();

    let sqrt_q = psd_sqrt(&target.q);
    let sqrt_omega0 = psd_sqrt(&omega0);
    let r_inv = target.r.clone().try_inverse().expect("R validated SPD");
    let sqrt_r = psd_sqrt(&target.r);
    // H' R^-1 sqrt(R): maps measurement-noise draws into the state update.
    let hrs = target.h.transpose() * &r_inv * &sqrt_r;
    let gain = target.gain();

    // Per-step gain matrices are path-independent: eta_k omega_k G and
    // omega_k H' R^-1 sqrt(R), using the step-start covariance.
    let mut k_state = Vec::with_capacity(steps);
    let mut k_noise = Vec::with_capacity(steps);
    for k in 0..steps {
        let om = &cov.matrices[k];
        k_state.push(eta[2 * k] * om * &gain);
        k_noise.push(om * &hrs);
    }

    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let mut path_seeds = Vec::with_capacity(config.paths);
    let mut mse_sum = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut sample_path = SamplePath {
        times: (0..=steps).map(|k| grid.state_q(k) * config.horizon).collect(),
        state: Vec::new(),
        estimate: Vec::new(),
        error: Vec::new(),
    };

    let mut phi = DVector::zeros(l);
    let mut phi_hat = DVector::zeros(l);
    let mut diff = DVector::zeros(l);
    let mut noise_vec = DVector::zeros(l);
    let mut zeta = DVector::zeros(m_dim);
    let mut new_phi = DVector::zeros(l);
    let mut new_hat = DVector::zeros(l);

    for path in 0..config.paths {
        let path_seed = master.next_u64();
        path_seeds.push(path_seed);
        let mut rng = ChaCha8Rng::seed_from_u64(path_seed);
        let draw = |rng: &mut ChaCha8Rng, out: &mut DVector<f64>| {
            for v in out.iter_mut() {
                *v = StandardNormal.sample(rng);
            }
        };

        phi_hat.fill(0.0);
        if config.zero_noise {
            phi.fill(0.0);
        } else {
            draw(&mut rng, &mut noise_vec);
            // e(0) ~ N(0, omega0), phi = phi_hat - e.
            phi.gemv(-1.0, &sqrt_omega0, &noise_vec, 0.0);
        }

        let record = path == 0;
        if record {
            sample_path.state.push(phi.iter().cloned().collect());
            sample_path.estimate.push(phi_hat.iter().cloned().collect());
            sample_path
                .error
                .push((&phi_hat - &phi).iter().cloned().collect());
        }

        let mut ee_prev = (&phi_hat - &phi).norm_squared();
        let mut path_mse = 0.0;
        max_abs = max_abs.max((&phi_hat - &phi).abs().max());

        for k in 0..steps {
            // True state: phi += dt A phi + sqrt(dt) sqrt(Q) xi.
            new_phi.copy_from(&phi);
            new_phi.gemv(dt, &target.a, &phi, 1.0);
            if !config.zero_noise {
                draw(&mut rng, &mut noise_vec);
                new_phi.gemv(sqrt_dt, &sqrt_q, &noise_vec, 1.0);
            }
            // Estimate: phi_hat += dt (A phi_hat + eta omega G (phi - phi_hat))
            //                    + sqrt(dt) sum_j gamma_j omega H' R^-1 sqrt(R) zeta_j.
            diff.copy_from(&phi);
            diff -= &phi_hat;
            new_hat.copy_from(&phi_hat);
            new_hat.gemv(dt, &target.a, &phi_hat, 1.0);
            new_hat.gemv(dt, &k_state[k], &diff, 1.0);
            if !config.zero_noise {
                for g in gammas.iter().take(n_agents) {
                    let gamma = g[2 * k];
                    draw(&mut rng, &mut zeta);
                    if gamma != 0.0 {
                        new_hat.gemv(sqrt_dt * gamma, &k_noise[k], &zeta, 1.0);
                    }
                }
            }
            phi.copy_from(&new_phi);
            phi_hat.copy_from(&new_hat);

            let ee = (&phi_hat - &phi).norm_squared();
            path_mse += 0.5 * dt * (ee_prev + ee);
            ee_prev = ee;
            max_abs = max_abs.max((&phi_hat - &phi).abs().max());
            if record {
                sample_path.state.push(phi.iter().cloned().collect());
                sample_path.estimate.push(phi_hat.iter().cloned().collect());
                sample_path
                    .error
                    .push((&phi_hat - &phi).iter().cloned().collect());
            }
        }
        mse_sum += path_mse / config.horizon;
    }

    Ok(FilterStats {
        target: target.id,
        empirical_mse: mse_sum / config.paths as f64,
        covariance_mse,
        max_abs_error: max_abs,
        path_seeds,
        sample_path,
    })
}
