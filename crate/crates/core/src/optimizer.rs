//! Cost and gradient assembly over parameterized trajectories, and the
//! projected gradient descent driver.
//!
//! The steady-state cost integrates the periodic covariance traces over one
//! normalized period plus the weighted control effort; its gradient combines
//! the periodic sensitivity machinery with the closed-form effort
//! derivatives. The transient cost integrates over a fixed horizon with the
//! covariance and its sensitivities propagated jointly, so the gradient is
//! the exact derivative of the discretized cost up to solver tolerances.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::covariance::{
    propagate_transient_sensitivities, solve_periodic_riccati, steady_sensitivity_batch,
    SensitivityForcing, SteadyOptions,
};
use crate::error::{Error, Result};
use crate::eta::{build_eta_profile, EtaProfile, TimeBase};
use crate::grid::Grid;
use crate::params::{ParamLayout, Parameterization};
use crate::scenario::{Mode, Scenario};

/// Dense gradient aligned to the canonical parameter layout.
#[derive(Debug, Clone)]
pub struct GradientVector {
    pub values: Vec<f64>,
    pub layout: ParamLayout,
}

impl GradientVector {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Reusable steady-state evaluator: keeps the converged periodic covariance
/// of each target as the next iteration's initial guess, which cuts the
/// period-map iteration to a handful of sweeps during descent.
pub struct SteadyEvaluator {
    pub opts: SteadyOptions,
    warm: Vec<Option<DMatrix<f64>>>,
}

impl SteadyEvaluator {
    pub fn new(scenario: &Scenario) -> Self {
        SteadyEvaluator {
            opts: SteadyOptions::default(),
            warm: vec![None; scenario.targets.len()],
        }
    }

    fn target_options(&self, i: usize) -> SteadyOptions {
        SteadyOptions {
            initial: self.warm[i].clone(),
            ..self.opts.clone()
        }
    }

    /// Steady cost only.
    pub fn cost<P: Parameterization>(
        &mut self,
        scenario: &Scenario,
        params: &P,
        grid: Grid,
    ) -> Result<f64> {
        let profile = steady_profile(scenario, params, grid)?;
        let period = params.period();
        let results: Vec<Result<(usize, f64, DMatrix<f64>)>> = scenario
            .targets
            .par_iter()
            .enumerate()
            .map(|(i, target)| {
                let bar = solve_periodic_riccati(
                    target,
                    &profile.targets[i].eta,
                    period,
                    grid,
                    &self.target_options(i),
                )?;
                let traces = bar.traces();
                Ok((i, grid.trapezoid(&traces), bar.matrices[0].clone()))
            })
            .collect();
        let mut cost = scenario.beta * params.effort_rate();
        for r in results {
            let (i, c, warm) = r?;
            cost += c;
            self.warm[i] = Some(warm);
        }
        Ok(cost)
    }

    /// Steady cost and its gradient in one pass.
    pub fn cost_and_gradient<P: Parameterization>(
        &mut self,
        scenario: &Scenario,
        params: &P,
        grid: Grid,
    ) -> Result<(f64, GradientVector)> {
        let profile = steady_profile(scenario, params, grid)?;
        let period = params.period();
        let d_total = params.param_count();
        let layout = params.layout();

        let results: Vec<Result<TargetContribution>> = scenario
            .targets
            .par_iter()
            .enumerate()
            .map(|(i, target)| {
                let eta = &profile.targets[i].eta;
                let bar =
                    solve_periodic_riccati(target, eta, period, grid, &self.target_options(i))?;
                let traces = bar.traces();
                let cost = grid.trapezoid(&traces);

                // Forcing rows: the period parameter always participates in
                // the time-scaled dynamics; trajectory parameters only when
                // they actually perturb this target's sensed power.
                let mut indices = Vec::new();
                let mut forcings = Vec::new();
                if let Some(row) = profile.targets[i].deta_row(0) {
                    indices.push(0);
                    forcings.push(SensitivityForcing {
                        deta: Some(row),
                        d_period: 1.0,
                    });
                } else {
                    indices.push(0);
                    forcings.push(SensitivityForcing {
                        deta: None,
                        d_period: 1.0,
                    });
                }
                for (d, row) in &profile.targets[i].deta {
                    if *d == 0 {
                        continue;
                    }
                    indices.push(*d);
                    forcings.push(SensitivityForcing {
                        deta: Some(row),
                        d_period: 0.0,
                    });
                }
                let batch = steady_sensitivity_batch(target, eta, &bar, period, &forcings)?;
                Ok(TargetContribution {
                    index: i,
                    cost,
                    grad: indices
                        .into_iter()
                        .zip(batch.trace_integrals)
                        .collect(),
                    warm: bar.matrices[0].clone(),
                })
            })
            .collect();

        let mut cost = scenario.beta * params.effort_rate();
        let mut grad = vec![0.0; d_total];
        params.effort_rate_gradient(&mut grad);
        for g in grad.iter_mut() {
            *g *= scenario.beta;
        }
        for r in results {
            let contrib = r?;
            cost += contrib.cost;
            for (d, v) in contrib.grad {
                grad[d] += v;
            }
            self.warm[contrib.index] = Some(contrib.warm);
        }
        Ok((
            cost,
            GradientVector {
                values: grad,
                layout,
            },
        ))
    }
}

struct TargetContribution {
    index: usize,
    cost: f64,
    grad: Vec<(usize, f64)>,
    warm: DMatrix<f64>,
}

fn steady_profile<P: Parameterization>(
    scenario: &Scenario,
    params: &P,
    grid: Grid,
) -> Result<EtaProfile> {
    if !scenario.mode.is_steady() {
        return Err(Error::invalid("steady cost requires a steady-mode scenario"));
    }
    let profile = build_eta_profile(scenario, params, grid, TimeBase::Periodic)?;
    if let Some(&i) = profile.unvisited_targets().first() {
        return Err(Error::NeverVisited(i));
    }
    Ok(profile)
}

/// Steady-state cost (one-shot; descent reuses a [`SteadyEvaluator`]).
pub fn cost_steady<P: Parameterization>(
    scenario: &Scenario,
    params: &P,
    grid: Grid,
) -> Result<f64> {
    SteadyEvaluator::new(scenario).cost(scenario, params, grid)
}

/// Steady-state cost gradient.
pub fn gradient_steady<P: Parameterization>(
    scenario: &Scenario,
    params: &P,
    grid: Grid,
) -> Result<GradientVector> {
    Ok(SteadyEvaluator::new(scenario)
        .cost_and_gradient(scenario, params, grid)?
        .1)
}

/// Transient cost over the scenario horizon.
pub fn cost_transient<P: Parameterization>(
    scenario: &Scenario,
    params: &P,
    grid: Grid,
) -> Result<f64> {
    transient_evaluate(scenario, params, grid, false).map(|(c, _)| c)
}

/// Transient cost gradient.
pub fn gradient_transient<P: Parameterization>(
    scenario: &Scenario,
    params: &P,
    grid: Grid,
) -> Result<GradientVector> {
    let (_, grad) = transient_evaluate(scenario, params, grid, true)?;
    Ok(grad.expect("gradient requested"))
}

/// Transient cost and optionally its gradient.
pub fn transient_cost_and_gradient<P: Parameterization>(
    scenario: &Scenario,
    params: &P,
    grid: Grid,
) -> Result<(f64, GradientVector)> {
    let (c, g) = transient_evaluate(scenario, params, grid, true)?;
    Ok((c, g.expect("gradient requested")))
}

fn transient_evaluate<P: Parameterization>(
    scenario: &Scenario,
    params: &P,
    grid: Grid,
    with_gradient: bool,
) -> Result<(f64, Option<GradientVector>)> {
    let horizon = match scenario.mode {
        Mode::Transient { horizon } => horizon,
        Mode::Steady => {
            return Err(Error::invalid(
                "transient cost requires a transient-mode scenario",
            ))
        }
    };
    let base = TimeBase::Transient { horizon };
    let profile = build_eta_profile(scenario, params, grid, base)?;
    let d_total = params.param_count();

    let results: Vec<Result<(f64, Vec<(usize, f64)>)>> = scenario
        .targets
        .par_iter()
        .enumerate()
        .map(|(i, target)| {
            let teta = &profile.targets[i];
            let rows: Vec<&[f64]> = if with_gradient {
                teta.deta.iter().map(|(_, r)| r.as_slice()).collect()
            } else {
                Vec::new()
            };
            let batch = propagate_transient_sensitivities(
                target,
                &teta.eta,
                &rows,
                &target.initial_covariance(),
                horizon,
                grid,
            )?;
            let traces = batch.omega.traces();
            let cost = grid.trapezoid(&traces) * horizon;
            let grads = teta
                .deta
                .iter()
                .map(|(d, _)| *d)
                .zip(batch.trace_integrals)
                .collect();
            Ok((cost, grads))
        })
        .collect();

    let mut cost_time_integral = 0.0;
    let mut grad = vec![0.0; d_total];
    for r in results {
        let (c, g) = r?;
        cost_time_integral += c;
        for (d, v) in g {
            grad[d] += v;
        }
    }

    // Control effort: trapezoid of the squared physical speed on the state
    // nodes, differentiated pointwise (the analytic velocity of both
    // parameterizations is exact).
    let (effort, effort_grad) =
        transient_effort(scenario, params, grid, horizon, with_gradient);
    cost_time_integral += scenario.beta * effort;
    if with_gradient {
        for (g, eg) in grad.iter_mut().zip(effort_grad.iter()) {
            *g += scenario.beta * eg;
        }
    }

    let cost = cost_time_integral / horizon;
    let gradient = if with_gradient {
        for g in grad.iter_mut() {
            *g /= horizon;
        }
        Some(GradientVector {
            values: grad,
            layout: params.layout(),
        })
    } else {
        None
    };
    Ok((cost, gradient))
}

/// `int_0^horizon sum_j |u_j(t)|^2 dt` by the trapezoid rule, and its
/// parameter gradient when requested.
fn transient_effort<P: Parameterization>(
    scenario: &Scenario,
    params: &P,
    grid: Grid,
    horizon: f64,
    with_gradient: bool,
) -> (f64, Vec<f64>) {
    let period = params.period();
    let dim = params.dim();
    let d_total = params.param_count();
    let steps = grid.steps();
    let h = horizon / steps as f64;
    let t2 = period * period;

    let mut vel = vec![0.0; dim];
    let mut acc = vec![0.0; dim];
    let mut vjac = DMatrix::zeros(dim, d_total);
    let mut effort = 0.0;
    let mut grad = vec![0.0; d_total];
    let mut node_grad = vec![0.0; d_total];

    for node in 0..=steps {
        let weight = if node == 0 || node == steps { 0.5 * h } else { h };
        let t = grid.state_q(node) * horizon;
        let w = t / period;
        let mut ph = w.rem_euclid(1.0);
        if ph == 0.0 && w > 0.0 {
            ph = 1.0;
        }
        let dph_dt = -t / t2;
        node_grad.iter_mut().for_each(|v| *v = 0.0);
        let mut node_effort = 0.0;
        for j in 0..params.agent_count() {
            params.velocity(j, ph, &mut vel);
            let v2: f64 = vel.iter().map(|v| v * v).sum();
            node_effort += v2 / t2;
            if with_gradient {
                params.velocity_jacobian(j, ph, &mut vjac);
                for d in 0..d_total {
                    let mut dot = 0.0;
                    for p in 0..dim {
                        dot += vel[p] * vjac[(p, d)];
                    }
                    if dot != 0.0 {
                        node_grad[d] += 2.0 * dot / t2;
                    }
                }
                // Period chain: the phase shifts and the 1/T^2 scale moves.
                params.acceleration(j, ph, &mut acc);
                let va: f64 = vel.iter().zip(acc.iter()).map(|(v, a)| v * a).sum();
                node_grad[0] += 2.0 * va * dph_dt / t2 - 2.0 * v2 / (t2 * period);
            }
        }
        effort += weight * node_effort;
        if with_gradient {
            for d in 0..d_total {
                grad[d] += weight * node_grad[d];
            }
        }
    }
    let _ = scenario;
    (effort, grad)
}

// ---------------------------------------------------------------------------
// Gradient descent

#[derive(Debug, Clone)]
pub enum StepRule {
    Constant(f64),
    /// Backtracking line search with sufficient decrease `c |grad|^2`.
    Armijo {
        initial: f64,
        c: f64,
        shrink: f64,
        max_backtracks: usize,
    },
}

#[derive(Debug, Clone)]
pub struct DescentConfig {
    pub step: StepRule,
    /// Stop when the gradient norm falls below this.
    pub eps: f64,
    pub max_iters: usize,
    pub grid: Grid,
}

impl Default for DescentConfig {
    fn default() -> Self {
        DescentConfig {
            step: StepRule::Constant(1e-3),
            eps: 1e-4,
            max_iters: 4000,
            grid: Grid::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cost: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub wall_ms: f64,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct OptimizationLog {
    pub iterations: Vec<IterationRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescentStatus {
    Converged,
    MaxIters,
    Diverged,
}

#[derive(Debug, Clone)]
pub struct DescentOutcome<P> {
    pub params: P,
    pub log: OptimizationLog,
    pub status: DescentStatus,
    /// Diagnostic for aborted runs (non-finite cost, or an iterate that
    /// stopped sensing a target mid-descent).
    pub abort: Option<String>,
}

/// Projected gradient descent: `theta <- proj(theta - kappa grad J)` until
/// the gradient norm falls below `eps` or the iteration budget runs out.
/// A non-finite cost or gradient aborts, returning the last finite iterate.
pub fn descend<P: Parameterization>(
    scenario: &Scenario,
    params0: &P,
    config: &DescentConfig,
) -> Result<DescentOutcome<P>> {
    let mut params = params0.project()?;
    let mut log = OptimizationLog::default();
    if config.max_iters == 0 {
        return Ok(DescentOutcome {
            params,
            log,
            status: DescentStatus::MaxIters,
            abort: None,
        });
    }

    let steady = scenario.mode.is_steady();
    let mut evaluator = SteadyEvaluator::new(scenario);
    let mut status = DescentStatus::MaxIters;
    let mut abort = None;

    for iteration in 0..config.max_iters {
        let started = Instant::now();
        let evaluated = if steady {
            evaluator.cost_and_gradient(scenario, &params, config.grid)
        } else {
            transient_cost_and_gradient(scenario, &params, config.grid)
        };
        let (cost, grad) = match evaluated {
            Ok(pair) => pair,
            // A failing first evaluation is a configuration problem; later
            // ones (an iterate drifting out of every sensing region) abort
            // the run but keep the progress made so far.
            Err(err) if iteration == 0 => return Err(err),
            Err(err) => {
                status = DescentStatus::Diverged;
                abort = Some(err.to_string());
                break;
            }
        };
        if !cost.is_finite() || !grad.is_finite() {
            status = DescentStatus::Diverged;
            abort = Some(format!("non-finite cost or gradient at iteration {iteration}"));
            break;
        }
        let grad_norm = grad.norm();

        let flat = params.to_flat();
        let mut step = match config.step {
            StepRule::Constant(k) => k,
            StepRule::Armijo { initial, .. } => initial,
        };
        let mut next = params.clone();
        if grad_norm > config.eps {
            if let StepRule::Armijo {
                c,
                shrink,
                max_backtracks,
                ..
            } = config.step
            {
                let mut tries = 0;
                loop {
                    let candidate = shifted(&params, &flat, &grad.values, step)?;
                    // Candidates that stop sensing a target count as
                    // infinitely bad and shrink the step further.
                    let cand_cost = if steady {
                        evaluator.cost(scenario, &candidate, config.grid)
                    } else {
                        cost_transient(scenario, &candidate, config.grid)
                    }
                    .unwrap_or(f64::INFINITY);
                    if cand_cost <= cost - c * step * grad_norm * grad_norm
                        || tries >= max_backtracks
                    {
                        next = candidate;
                        break;
                    }
                    step *= shrink;
                    tries += 1;
                }
            } else {
                next = shifted(&params, &flat, &grad.values, step)?;
            }
        }

        log.iterations.push(IterationRecord {
            iteration,
            cost,
            grad_norm,
            step,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            params: flat,
        });

        if grad_norm <= config.eps {
            status = DescentStatus::Converged;
            break;
        }
        params = next;
    }

    if status == DescentStatus::Diverged {
        // Hand back the last iterate that still evaluated cleanly.
        if let Some(rec) = log.iterations.last() {
            params = params.with_flat(&rec.params)?.project()?;
        }
    }

    Ok(DescentOutcome {
        params,
        log,
        status,
        abort,
    })
}

fn shifted<P: Parameterization>(
    params: &P,
    flat: &[f64],
    grad: &[f64],
    step: f64,
) -> Result<P> {
    let moved: Vec<f64> = flat
        .iter()
        .zip(grad.iter())
        .map(|(x, g)| x - step * g)
        .collect();
    params.with_flat(&moved)?.project()
}
