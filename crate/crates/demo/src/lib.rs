//! Browser playground: drive the trajectory optimizer interactively and
//! explore periodic covariance limit cycles. Compiled to WebAssembly for the
//! static page under `www/`; all rendering stays in JavaScript, this module
//! only moves numbers.

use wasm_bindgen::prelude::*;

use permon_core::covariance::{solve_periodic_riccati, SteadyOptions};
use permon_core::eta::{build_eta_profile, TimeBase};
use permon_core::fourier::ParamsFourier;
use permon_core::initializer::{fourier_fit, mtsp_solve, FitConfig, GaConfig};
use permon_core::optimizer::SteadyEvaluator;
use permon_core::params::Parameterization;
use permon_core::scenario::Scenario;
use permon_core::traj1d::{AgentParams1d, Params1d};
use permon_core::Grid;

fn js_err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

const PAPER_2X2: &str = r#""A": [[-1.0, -0.1], [-0.1, 0.01]],
    "Q": [[1.0, 0.0], [0.0, 1.0]],
    "H": [[1.0, 0.0], [0.0, 1.0]],
    "R": [[1.0, 0.0], [0.0, 1.0]]"#;

fn preset_scenario(name: &str) -> Result<Scenario, String> {
    let targets: Vec<(f64, f64)> = match name {
        "three" => vec![(0.0, 0.5), (0.5, 0.0), (-0.5, 0.0)],
        "ring" => (0..6)
            .map(|k| {
                let ang = std::f64::consts::TAU * k as f64 / 6.0;
                (1.2 * ang.cos(), 1.2 * ang.sin())
            })
            .collect(),
        "grid" => vec![
            (-1.0, -1.0),
            (-1.0, 1.0),
            (1.0, -1.0),
            (1.0, 1.0),
            (0.0, 0.0),
        ],
        other => return Err(js_err(format!("unknown preset {other:?}"))),
    };
    let agents = if targets.len() > 4 { 2 } else { 1 };
    let target_json: Vec<String> = targets
        .iter()
        .map(|(x, y)| {
            format!(
                r#"{{"position": [{x}, {y}], {PAPER_2X2}, "radius": 0.5}}"#
            )
        })
        .collect();
    let agent_json: Vec<String> = (0..agents)
        .map(|_| r#"{"u_max": "unbounded"}"#.to_string())
        .collect();
    let text = format!(
        r#"{{"dimension": 2, "beta": 0.001, "mode": "steady",
            "targets": [{}], "agents": [{}]}}"#,
        target_json.join(","),
        agent_json.join(",")
    );
    Scenario::from_json(&text).map_err(js_err)
}

/// Interactive gradient descent over Fourier trajectories for a preset
/// two-dimensional scenario.
#[wasm_bindgen]
pub struct TrajectoryLab {
    scenario: Scenario,
    params: ParamsFourier,
    initial: ParamsFourier,
    evaluator: SteadyEvaluator,
    grid: Grid,
    kappa: f64,
    history: Vec<f64>,
}

#[wasm_bindgen]
impl TrajectoryLab {
    /// Presets: "three" (one agent, three targets), "ring", "grid".
    #[wasm_bindgen(constructor)]
    pub fn new(preset: &str) -> Result<TrajectoryLab, String> {
        let scenario = preset_scenario(preset)?;
        let positions: Vec<_> = scenario.targets.iter().map(|t| t.position.clone()).collect();
        let schedule = mtsp_solve(
            &positions,
            scenario.agents.len(),
            &GaConfig {
                generations: 600,
                seed: 7,
                ..GaConfig::default()
            },
        )
        .map_err(js_err)?;
        let params = fourier_fit(&schedule, &scenario, &[1, 2, 3, 4, 5], &FitConfig::default())
            .map_err(js_err)?;
        let evaluator = SteadyEvaluator::new(&scenario);
        Ok(TrajectoryLab {
            initial: params.clone(),
            params,
            evaluator,
            grid: Grid::new(400).map_err(js_err)?,
            kappa: 1e-4,
            history: Vec::new(),
            scenario,
        })
    }

    pub fn reset(&mut self) {
        self.params = self.initial.clone();
        self.evaluator = SteadyEvaluator::new(&self.scenario);
        self.history.clear();
    }

    pub fn set_step_size(&mut self, kappa: f64) {
        self.kappa = kappa;
    }

    /// Run `n` descent iterations; returns the latest cost.
    pub fn step(&mut self, n: u32) -> Result<f64, String> {
        let mut cost = f64::NAN;
        for _ in 0..n.max(1) {
            let (c, grad) = self
                .evaluator
                .cost_and_gradient(&self.scenario, &self.params, self.grid)
                .map_err(js_err)?;
            cost = c;
            self.history.push(c);
            let flat = self.params.to_flat();
            let moved: Vec<f64> = flat
                .iter()
                .zip(grad.values.iter())
                .map(|(x, g)| x - self.kappa * g)
                .collect();
            self.params = self
                .params
                .with_flat(&moved)
                .and_then(|p| p.project())
                .map_err(js_err)?;
        }
        Ok(cost)
    }

    pub fn cost_history(&self) -> Vec<f64> {
        self.history.clone()
    }

    pub fn iteration(&self) -> u32 {
        self.history.len() as u32
    }

    pub fn agent_count(&self) -> u32 {
        self.scenario.agents.len() as u32
    }

    pub fn period(&self) -> f64 {
        self.params.period
    }

    /// Targets as `[x, y, radius]` triples.
    pub fn targets(&self) -> Vec<f64> {
        self.scenario
            .targets
            .iter()
            .flat_map(|t| vec![t.position[0], t.position[1], t.radii[0]])
            .collect()
    }

    /// One agent's closed curve as `[x0, y0, x1, y1, ...]`.
    pub fn trajectory(&self, agent: u32, samples: u32) -> Vec<f64> {
        let n = samples.max(8) as usize;
        let mut out = Vec::with_capacity(2 * (n + 1));
        let mut pos = [0.0; 2];
        for k in 0..=n {
            self.params.position(agent as usize, k as f64 / n as f64, &mut pos);
            out.extend_from_slice(&pos);
        }
        out
    }

    /// Covariance trace of one target over the current limit cycle,
    /// `[q, trace]` pairs. Fails when some target is never sensed.
    pub fn covariance_trace(&mut self, target: u32) -> Result<Vec<f64>, String> {
        let profile = build_eta_profile(&self.scenario, &self.params, self.grid, TimeBase::Periodic)
            .map_err(js_err)?;
        let i = target as usize;
        let bar = solve_periodic_riccati(
            &self.scenario.targets[i],
            &profile.targets[i].eta,
            self.params.period,
            self.grid,
            &SteadyOptions::default(),
        )
        .map_err(js_err)?;
        let mut out = Vec::with_capacity(2 * bar.matrices.len());
        for (node, m) in bar.matrices.iter().enumerate() {
            out.push(self.grid.state_q(node));
            out.push(m.trace());
        }
        Ok(out)
    }
}

/// Covariance limit cycles of a single target under a dwell/move patrol:
/// the agent dwells on the target, sweeps out to a chosen excursion and
/// returns, all within one period.
#[wasm_bindgen]
pub struct LimitCycleLab {
    scenario: Scenario,
}

#[wasm_bindgen]
impl LimitCycleLab {
    #[wasm_bindgen(constructor)]
    pub fn new() -> Result<LimitCycleLab, String> {
        let text = format!(
            r#"{{"dimension": 1, "beta": 0.0, "mode": "steady",
                "targets": [{{"position": [0.0], {PAPER_2X2}, "radius": 0.9}}],
                "agents": [{{"u_max": 1.0}}]}}"#
        );
        Ok(LimitCycleLab {
            scenario: Scenario::from_json(&text).map_err(js_err)?,
        })
    }

    /// Steady covariance trace over one period for a patrol that dwells at
    /// the target for `dwell_frac` of the period and sweeps out to
    /// `excursion` and back. Returns `[q, trace]` pairs; errors when the
    /// patrol never senses the target.
    pub fn solve(
        &self,
        period: f64,
        dwell_frac: f64,
        excursion: f64,
    ) -> Result<Vec<f64>, String> {
        if !(0.0..=1.0).contains(&dwell_frac) {
            return Err(js_err("dwell fraction must lie in [0, 1]"));
        }
        if period <= 0.0 || excursion < 0.0 {
            return Err(js_err("period must be positive and excursion nonnegative"));
        }
        // Feasibility: the out-and-back sweep must fit in the move budget.
        let move_frac = 1.0 - dwell_frac;
        let needed = 2.0 * excursion / period;
        if needed > move_frac + 1e-12 {
            return Err(js_err(format!(
                "excursion {excursion} does not fit: needs {needed:.3} of the period, {move_frac:.3} available"
            )));
        }
        let half_move = 0.5 * needed;
        let params = Params1d::new(
            period,
            vec![AgentParams1d {
                s0: 0.0,
                tau: vec![half_move, half_move],
                omega: vec![dwell_frac, 0.0],
            }],
            vec![1.0],
        )
        .map_err(js_err)?;
        let grid = Grid::new(600).map_err(js_err)?;
        let profile = build_eta_profile(&self.scenario, &params, grid, TimeBase::Periodic)
            .map_err(js_err)?;
        let bar = solve_periodic_riccati(
            &self.scenario.targets[0],
            &profile.targets[0].eta,
            period,
            grid,
            &SteadyOptions::default(),
        )
        .map_err(js_err)?;
        let mut out = Vec::with_capacity(2 * bar.matrices.len());
        for (node, m) in bar.matrices.iter().enumerate() {
            out.push(grid.state_q(node));
            out.push(m.trace());
        }
        Ok(out)
    }

    /// Mean trace over the cycle, the number the optimizer would minimize.
    pub fn mean_trace(&self, period: f64, dwell_frac: f64, excursion: f64) -> Result<f64, String> {
        let curve = self.solve(period, dwell_frac, excursion)?;
        let n = curve.len() / 2;
        let mut acc = 0.0;
        for k in 0..n {
            let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
            acc += w * curve[2 * k + 1];
        }
        Ok(acc / (n - 1) as f64)
    }
}
