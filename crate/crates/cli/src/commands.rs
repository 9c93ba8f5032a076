//! Subcommand implementations.

use anyhow::{bail, Result};

use permon_core::covariance::{
    propagate_covariance, simulate_kalman_bucy, solve_periodic_riccati, CovarianceTrajectory,
    FilterConfig, SteadyOptions,
};
use permon_core::eta::{build_eta_profile, TimeBase};
use permon_core::fourier::ParamsFourier;
use permon_core::initializer::{fourier_fit, mtsp_solve, schedule_to_params_1d, FitConfig, GaConfig, Schedule};
use permon_core::optimizer::{descend, DescentConfig, DescentStatus, StepRule};
use permon_core::params::Parameterization;
use permon_core::scenario::{gamma_eval, Mode, Scenario};
use permon_core::traj1d::{
    canonicalize_policy_1d, policy_cost, CanonicalOptions, Params1d, Policy1d,
};
use permon_core::Grid;

use crate::config::{ParamKind, RunConfig};
use crate::io;

/// Either live parameterization, dispatched by the run configuration.
pub enum AnyParams {
    OneD(Params1d),
    Fourier(ParamsFourier),
}

impl AnyParams {
    fn doc(&self) -> io::ParamsDoc {
        match self {
            AnyParams::OneD(p) => io::ParamsDoc::from_1d(p),
            AnyParams::Fourier(p) => io::ParamsDoc::from_fourier(p),
        }
    }
}

fn time_base(scenario: &Scenario) -> TimeBase {
    match scenario.mode {
        Mode::Steady => TimeBase::Periodic,
        Mode::Transient { horizon } => TimeBase::Transient { horizon },
    }
}

/// Run the schedule heuristic and convert it to initial parameters.
pub fn build_initial_params(config: &RunConfig) -> Result<(Schedule, AnyParams)> {
    let scenario = &config.scenario;
    let positions: Vec<_> = scenario.targets.iter().map(|t| t.position.clone()).collect();
    let ga = GaConfig {
        population: config.init.population,
        generations: config.init.generations,
        seed: config.seed,
        ..GaConfig::default()
    };
    let schedule = mtsp_solve(&positions, scenario.agents.len(), &ga)?;
    let params = match config.kind {
        ParamKind::OneD => {
            let mut p = schedule_to_params_1d(&schedule, scenario)?;
            if !scenario.mode.is_steady() {
                p = p.transient();
            }
            AnyParams::OneD(p)
        }
        ParamKind::Fourier => {
            let frequencies: Vec<u32> = (1..=config.init.harmonics as u32).collect();
            let fit = FitConfig {
                delta: config.init.delta,
                ..FitConfig::default()
            };
            AnyParams::Fourier(fourier_fit(&schedule, scenario, &frequencies, &fit)?)
        }
    };
    Ok((schedule, params))
}

/// Load parameters from the configured file, or initialize when absent.
pub fn load_or_init_params(config: &RunConfig) -> Result<AnyParams> {
    match &config.params_path {
        Some(path) => {
            let doc = io::ParamsDoc::load(path)?;
            Ok(match config.kind {
                ParamKind::OneD => AnyParams::OneD(doc.into_params_1d(&config.scenario)?),
                ParamKind::Fourier => {
                    AnyParams::Fourier(doc.into_params_fourier(&config.scenario)?)
                }
            })
        }
        None => Ok(build_initial_params(config)?.1),
    }
}

pub fn cmd_init(config: &RunConfig) -> Result<i32> {
    let (schedule, params) = build_initial_params(config)?;
    println!("tour lengths (cycle, including the closing leg):");
    for (j, tour) in schedule.tours.iter().enumerate() {
        println!(
            "  agent {j}: {:.6}  targets {:?}",
            tour.total, tour.targets
        );
    }
    println!("max tour: {:.6}", schedule.max_tour());

    // Feasibility: every target must be sensed somewhere along the cycle.
    let grid = Grid::new(config.grid_steps)?;
    let profile = match &params {
        AnyParams::OneD(p) => build_eta_profile(&config.scenario, p, grid, TimeBase::Periodic)?,
        AnyParams::Fourier(p) => build_eta_profile(&config.scenario, p, grid, TimeBase::Periodic)?,
    };
    let unvisited = profile.unvisited_targets();
    if unvisited.is_empty() {
        println!("feasibility: every target is sensed along the initial trajectory");
    } else {
        println!("feasibility: WARNING, unsensed targets {unvisited:?}");
    }

    let out = config.out.join("params_init.json");
    params.doc().save(&out)?;
    println!("wrote {}", out.display());
    Ok(0)
}

pub fn cmd_optimize(config: &RunConfig) -> Result<i32> {
    let scenario = &config.scenario;
    let grid = Grid::new(config.grid_steps)?;
    let params = load_or_init_params(config)?;

    let step = if config.optimizer.armijo {
        StepRule::Armijo {
            initial: config.optimizer.step,
            c: 1e-4,
            shrink: 0.5,
            max_backtracks: 20,
        }
    } else {
        StepRule::Constant(config.optimizer.step)
    };
    let descent = DescentConfig {
        step,
        eps: config.optimizer.eps,
        max_iters: config.optimizer.max_iters,
        grid,
    };

    let (status, log, abort, final_params) = match params {
        AnyParams::OneD(p) => {
            let out = descend(scenario, &p, &descent)?;
            (out.status, out.log, out.abort, AnyParams::OneD(out.params))
        }
        AnyParams::Fourier(p) => {
            let out = descend(scenario, &p, &descent)?;
            (out.status, out.log, out.abort, AnyParams::Fourier(out.params))
        }
    };
    if let Some(reason) = &abort {
        eprintln!("descent aborted: {reason}");
    }

    std::fs::create_dir_all(&config.out)?;
    io::write_log_csv(&config.out.join("log.csv"), &log)?;
    match &final_params {
        AnyParams::OneD(p) => write_artifacts(config, p, grid)?,
        AnyParams::Fourier(p) => write_artifacts(config, p, grid)?,
    }
    final_params.doc().save(&config.out.join("params_final.json"))?;

    println!("scenario: {}", config.scenario_path.display());
    if let (Some(first), Some(last)) = (log.iterations.first(), log.iterations.last()) {
        println!(
            "iterations: {}  cost: {} -> {}  |grad|: {}",
            log.iterations.len(),
            first.cost,
            last.cost,
            last.grad_norm
        );
    }
    let code = match status {
        DescentStatus::Converged => {
            println!("status: converged");
            0
        }
        DescentStatus::MaxIters => {
            println!("status: iteration budget exhausted");
            2
        }
        DescentStatus::Diverged => {
            println!("status: diverged (non-finite cost); last finite iterate kept");
            3
        }
    };
    println!("artifacts in {}", config.out.display());
    Ok(code)
}

fn write_artifacts<P: Parameterization>(config: &RunConfig, params: &P, grid: Grid) -> Result<()> {
    let scenario = &config.scenario;
    io::write_trajectory_csv(
        &config.out.join("trajectory.csv"),
        params,
        grid,
        scenario.horizon(),
    )?;
    let covs = compute_covariances(scenario, params, grid)?;
    io::write_covariance_csv(&config.out.join("covariance.csv"), &covs)?;
    Ok(())
}

/// Final covariance trajectories: the periodic limit cycle in steady mode,
/// the propagated transient otherwise.
pub fn compute_covariances<P: Parameterization>(
    scenario: &Scenario,
    params: &P,
    grid: Grid,
) -> Result<Vec<CovarianceTrajectory>> {
    let profile = build_eta_profile(scenario, params, grid, time_base(scenario))?;
    let mut out = Vec::with_capacity(scenario.targets.len());
    for (i, target) in scenario.targets.iter().enumerate() {
        let traj = match scenario.mode {
            Mode::Steady => solve_periodic_riccati(
                target,
                &profile.targets[i].eta,
                params.period(),
                grid,
                &SteadyOptions::default(),
            ),
            Mode::Transient { horizon } => propagate_covariance(
                target,
                &profile.targets[i].eta,
                &target.initial_covariance(),
                horizon,
                grid,
            ),
        };
        match traj {
            Ok(t) => out.push(t),
            // An aborted run can leave a target unsensed; report it and keep
            // the covariance rows of the others.
            Err(err) => eprintln!("covariance of target {i} unavailable: {err}"),
        }
    }
    Ok(out)
}

pub struct ValidateArgs {
    pub paths: usize,
    pub horizon: Option<f64>,
    pub zero_noise: bool,
}

pub fn cmd_validate(config: &RunConfig, args: &ValidateArgs) -> Result<i32> {
    let scenario = &config.scenario;
    let grid = Grid::new(config.grid_steps)?;
    let params = load_or_init_params(config)?;

    let horizon = args.horizon.or(scenario.horizon()).unwrap_or_else(|| {
        let period = match &params {
            AnyParams::OneD(p) => p.period(),
            AnyParams::Fourier(p) => p.period(),
        };
        5.0 * period
    });

    let mut rows = Vec::new();
    println!("target  empirical_mse  covariance_mse  deviation");
    for (i, target) in scenario.targets.iter().enumerate() {
        let gammas = match &params {
            AnyParams::OneD(p) => gamma_profiles(scenario, p, i, grid, horizon)?,
            AnyParams::Fourier(p) => gamma_profiles(scenario, p, i, grid, horizon)?,
        };
        let stats = simulate_kalman_bucy(
            target,
            &gammas,
            &FilterConfig {
                horizon,
                paths: args.paths,
                seed: config.seed.wrapping_add(i as u64),
                zero_noise: args.zero_noise,
            },
            grid,
        )?;
        println!(
            "{:>6}  {:>13.6e}  {:>14.6e}  {:>8.4}%",
            i,
            stats.empirical_mse,
            stats.covariance_mse,
            100.0 * stats.relative_deviation()
        );
        rows.push((
            i,
            stats.empirical_mse,
            stats.covariance_mse,
            stats.relative_deviation(),
        ));
    }
    io::write_validation_csv(&config.out.join("validation.csv"), &rows)?;
    println!("wrote {}", config.out.join("validation.csv").display());
    Ok(0)
}

/// Per-agent sensing gains for one target along the trajectory over
/// `[0, horizon]` physical time.
fn gamma_profiles<P: Parameterization>(
    scenario: &Scenario,
    params: &P,
    target: usize,
    grid: Grid,
    horizon: f64,
) -> Result<Vec<Vec<f64>>> {
    let spec = &scenario.targets[target];
    let dim = scenario.dim;
    let period = params.period();
    let mut pos = vec![0.0; dim];
    let mut out = vec![vec![0.0; grid.sample_count()]; scenario.agents.len()];
    for k in 0..grid.sample_count() {
        let t = grid.sample_q(k) * horizon;
        let w = t / period;
        let mut phase = w.rem_euclid(1.0);
        if phase == 0.0 && w > 0.0 {
            phase = 1.0;
        }
        for (j, row) in out.iter_mut().enumerate() {
            params.position(j, phase, &mut pos);
            let diff: Vec<f64> = pos
                .iter()
                .zip(spec.position.iter())
                .map(|(s, x)| s - x)
                .collect();
            row[k] = gamma_eval(&diff, spec.radii[j])?;
        }
    }
    Ok(out)
}

pub struct CanonicalizeArgs {
    pub policy: Option<std::path::PathBuf>,
    pub horizon: Option<f64>,
    pub allow_non_isolated: bool,
}

pub fn cmd_canonicalize(config: &RunConfig, args: &CanonicalizeArgs) -> Result<i32> {
    let scenario = &config.scenario;
    if scenario.dim != 1 {
        bail!("canonicalization requires a 1D scenario");
    }
    let policy = match (&args.policy, &config.params_path) {
        (Some(path), _) => io::load_policy(path)?,
        (None, Some(path)) => {
            let doc = io::ParamsDoc::load(path)?;
            let params = doc.into_params_1d(scenario)?;
            let horizon = args.horizon.unwrap_or(params.period);
            Policy1d::from_params(&params, horizon)?
        }
        (None, None) => bail!("canonicalize needs --policy or --params"),
    };

    let canon = canonicalize_policy_1d(
        &policy,
        scenario,
        CanonicalOptions {
            allow_non_isolated: args.allow_non_isolated,
        },
    )?;

    let grid = Grid::new(config.grid_steps)?;
    let before = policy_cost(scenario, &policy, grid)?;
    let after = policy_cost(scenario, &canon, grid)?;
    println!("cost before: {before}");
    println!("cost after:  {after}");
    for (j, agent) in canon.agents.iter().enumerate() {
        println!("agent {j}: {} control switches", agent.switch_count());
    }
    let out = config.out.join("policy_canonical.json");
    io::save_policy(&out, &canon)?;
    println!("wrote {}", out.display());
    Ok(0)
}

/// Map runtime failures onto the documented exit codes: divergence is 3,
/// anything else at this layer is a configuration problem (4).
pub fn exit_code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<permon_core::Error>() {
            if matches!(core, permon_core::Error::Divergence { .. }) {
                return 3;
            }
        }
    }
    4
}
