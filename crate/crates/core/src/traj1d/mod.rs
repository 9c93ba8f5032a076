//! Dwell/move trajectory parameterization for one-dimensional workspaces.
//!
//! One period of an agent's motion is an alternating sequence of dwells
//! (`omega[m] * T` time units at rest) and full-speed moves (`tau[m] * T`
//! time units, to the right for the first move, then alternating). Periodic
//! feasibility additionally requires the segments to fit in one period and
//! the signed move times to cancel so the agent returns to its start.

mod canonical;

pub use canonical::{canonicalize_policy_1d, policy_cost, CanonicalOptions};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamLayout, Parameterization};

/// Feasibility slack on the segment budget and nonnegativity checks.
const FEAS_TOL: f64 = 1e-9;
/// Convergence threshold for the alternating projection.
const PROJECTION_TOL: f64 = 1e-10;
const PROJECTION_MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentParams1d {
    /// Initial position `s_{j,0}`.
    pub s0: f64,
    /// Normalized move times, one per move segment.
    pub tau: Vec<f64>,
    /// Normalized dwell times, one per move segment (the dwell precedes the
    /// move with the same index).
    pub omega: Vec<f64>,
}

/// Parameters of all agents over one period.
#[derive(Debug, Clone, PartialEq)]
pub struct Params1d {
    pub period: f64,
    pub agents: Vec<AgentParams1d>,
    /// Speed bound per agent (physical units, carried explicitly).
    pub u_max: Vec<f64>,
    /// Whether the closure constraints of the periodic case apply. Transient
    /// runs drop them.
    pub periodic: bool,
}

impl Params1d {
    pub fn new(period: f64, agents: Vec<AgentParams1d>, u_max: Vec<f64>) -> Result<Self> {
        if agents.len() != u_max.len() {
            return Err(Error::invalid("one speed bound per agent required"));
        }
        for (j, a) in agents.iter().enumerate() {
            if a.tau.len() != a.omega.len() {
                return Err(Error::invalid(format!(
                    "agent {j}: tau and omega must have equal length"
                )));
            }
        }
        if u_max.iter().any(|u| *u <= 0.0) {
            return Err(Error::invalid("speed bounds must be positive"));
        }
        Ok(Params1d {
            period,
            agents,
            u_max,
            periodic: true,
        })
    }

    pub fn transient(mut self) -> Self {
        self.periodic = false;
        self
    }

    /// Structural feasibility: nonnegative times and a segment budget within
    /// one period. The closure constraint is reported separately because
    /// gradient checks evaluate slightly off the constraint surface.
    pub fn check_segments(&self) -> Result<()> {
        if self.period < 0.0 {
            return Err(Error::invalid(format!(
                "period must be nonnegative, got {}",
                self.period
            )));
        }
        for (j, a) in self.agents.iter().enumerate() {
            if a.tau.iter().chain(a.omega.iter()).any(|v| *v < -FEAS_TOL) {
                return Err(Error::invalid(format!(
                    "agent {j}: negative movement or dwell time"
                )));
            }
            let total: f64 = a.tau.iter().sum::<f64>() + a.omega.iter().sum::<f64>();
            if total > 1.0 + FEAS_TOL {
                return Err(Error::invalid(format!(
                    "agent {j}: segments exceed one period (sum {total:.6})"
                )));
            }
        }
        Ok(())
    }

    /// Signed sum of the move times; zero for a closed (periodic) trajectory.
    pub fn closure_residual(&self, agent: usize) -> f64 {
        self.agents[agent]
            .tau
            .iter()
            .enumerate()
            .map(|(m, t)| direction(m) * t)
            .sum()
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        if self.check_segments().is_err() {
            return false;
        }
        if !self.periodic {
            return true;
        }
        (0..self.agents.len()).all(|j| self.closure_residual(j).abs() <= tol)
    }
}

/// Direction of the m-th move (0-based): right, left, right, ...
fn direction(m: usize) -> f64 {
    if m % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Which segment of the dwell/move cycle a normalized time falls in.
/// Boundaries belong to the segment that ends there (left convention), so
/// derivative conventions match the left segment.
enum Segment {
    /// In the dwell preceding move `m`; `moved` moves completed.
    Dwell { moved: usize },
    /// In move `m`, at offset `xi` from the move start.
    Move { m: usize, xi: f64 },
    /// After the last segment.
    Tail,
}

fn locate(agent: &AgentParams1d, q: f64) -> Segment {
    let mut t = 0.0;
    for m in 0..agent.tau.len() {
        if q <= t + agent.omega[m] {
            return Segment::Dwell { moved: m };
        }
        t += agent.omega[m];
        if q <= t + agent.tau[m] {
            return Segment::Move { m, xi: q - t };
        }
        t += agent.tau[m];
    }
    Segment::Tail
}

/// Position of one agent at normalized time `q in [0, 1]`.
pub fn position_1d(params: &Params1d, agent: usize, q: f64) -> Result<f64> {
    params.check_segments()?;
    let a = &params.agents[agent];
    let scale = params.period * params.u_max[agent];
    let completed = |count: usize| -> f64 {
        (0..count).map(|p| direction(p) * a.tau[p]).sum::<f64>()
    };
    let s = match locate(a, q) {
        Segment::Dwell { moved } => a.s0 + scale * completed(moved),
        Segment::Move { m, xi } => a.s0 + scale * (completed(m) + direction(m) * xi),
        Segment::Tail => a.s0 + scale * completed(a.tau.len()),
    };
    Ok(s)
}

/// Partial derivatives of [`position_1d`] with respect to every parameter of
/// the same agent. At exact segment boundaries the left-segment value is
/// used.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionGradients1d {
    pub d_tau: Vec<f64>,
    pub d_omega: Vec<f64>,
    pub d_period: f64,
    pub d_start: f64,
}

pub fn position_gradients_1d(params: &Params1d, agent: usize, q: f64) -> PositionGradients1d {
    let a = &params.agents[agent];
    let n = a.tau.len();
    let scale = params.period * params.u_max[agent];
    let u = params.u_max[agent];
    let mut d_tau = vec![0.0; n];
    let d_omega;
    let mut displacement = 0.0; // (s - s0) / (T u)

    match locate(a, q) {
        Segment::Dwell { moved } => {
            for p in 0..moved {
                d_tau[p] = scale * direction(p);
                displacement += direction(p) * a.tau[p];
            }
            d_omega = vec![0.0; n];
        }
        Segment::Move { m, xi } => {
            let dm = direction(m);
            for p in 0..m {
                // Completed move p contributes directly; it also delays the
                // current move start, shifting the in-move offset.
                d_tau[p] = scale * (direction(p) - dm);
                displacement += direction(p) * a.tau[p];
            }
            displacement += dm * xi;
            let mut dw = vec![0.0; n];
            for (p, slot) in dw.iter_mut().enumerate().take(m + 1) {
                let _ = p;
                *slot = -scale * dm;
            }
            d_omega = dw;
        }
        Segment::Tail => {
            for p in 0..n {
                d_tau[p] = scale * direction(p);
                displacement += direction(p) * a.tau[p];
            }
            d_omega = vec![0.0; n];
        }
    }

    let d_period = u * displacement; // equals (s - s0) / T
    PositionGradients1d {
        d_tau,
        d_omega,
        d_period,
        d_start: 1.0,
    }
}

/// Velocity `ds/dq` (left convention at boundaries).
pub fn velocity_1d(params: &Params1d, agent: usize, q: f64) -> f64 {
    let a = &params.agents[agent];
    match locate(a, q) {
        Segment::Move { m, .. } => direction(m) * params.period * params.u_max[agent],
        _ => 0.0,
    }
}

/// Euclidean projection onto the feasible parameter set: nonnegative times,
/// nonnegative period, segment budget within one period, and (in the
/// periodic case) signed move times summing to zero. Computed per agent by
/// Dykstra's alternating projections.
pub fn project_params_1d(raw: &Params1d) -> Result<Params1d> {
    let mut out = raw.clone();
    out.period = raw.period.max(0.0);
    if !out.period.is_finite() {
        return Err(Error::ProjectionFailure(0));
    }
    for agent in &mut out.agents {
        project_agent(agent, raw.periodic)?;
    }
    Ok(out)
}

fn project_agent(agent: &mut AgentParams1d, periodic: bool) -> Result<()> {
    if agent
        .tau
        .iter()
        .chain(agent.omega.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::ProjectionFailure(0));
    }
    let n = agent.tau.len();
    if !periodic {
        for v in agent.tau.iter_mut().chain(agent.omega.iter_mut()) {
            *v = v.max(0.0);
            if !v.is_finite() {
                return Err(Error::ProjectionFailure(0));
            }
        }
        return Ok(());
    }

    // x = [tau; omega], three sets: the nonnegative orthant, the halfspace
    // sum(x) <= 1, and the hyperplane c'x = 0 with alternating signs on tau.
    let dim = 2 * n;
    let mut x: Vec<f64> = agent.tau.iter().chain(agent.omega.iter()).cloned().collect();
    let mut corrections = [vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]];
    let mut c = vec![0.0; dim];
    for (m, slot) in c.iter_mut().enumerate().take(n) {
        *slot = direction(m);
    }
    let c_norm2: f64 = n as f64;

    let mut sweeps = 0;
    loop {
        let before = x.clone();
        for (set, corr) in corrections.iter_mut().enumerate() {
            let mut y: Vec<f64> = x.iter().zip(corr.iter()).map(|(a, b)| a + b).collect();
            match set {
                0 => {
                    for v in y.iter_mut() {
                        *v = v.max(0.0);
                    }
                }
                1 => {
                    let s: f64 = y.iter().sum();
                    if s > 1.0 {
                        let shift = (s - 1.0) / dim as f64;
                        for v in y.iter_mut() {
                            *v -= shift;
                        }
                    }
                }
                _ => {
                    let dot: f64 = y.iter().zip(c.iter()).map(|(a, b)| a * b).sum();
                    let shift = dot / c_norm2;
                    for (v, ci) in y.iter_mut().zip(c.iter()) {
                        *v -= shift * ci;
                    }
                }
            }
            for i in 0..dim {
                corr[i] = x[i] + corr[i] - y[i];
                x[i] = y[i];
            }
        }
        sweeps += 1;
        let change = x
            .iter()
            .zip(before.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if change < PROJECTION_TOL {
            break;
        }
        if sweeps >= PROJECTION_MAX_SWEEPS || !change.is_finite() {
            return Err(Error::ProjectionFailure(sweeps));
        }
    }

    agent.tau.copy_from_slice(&x[..n]);
    agent.omega.copy_from_slice(&x[n..]);
    Ok(())
}

impl Parameterization for Params1d {
    fn dim(&self) -> usize {
        1
    }

    fn agent_count(&self) -> usize {
        self.agents.len()
    }

    fn period(&self) -> f64 {
        self.period
    }

    fn layout(&self) -> ParamLayout {
        let mut ids = vec![ParamId::Period];
        for (j, a) in self.agents.iter().enumerate() {
            ids.push(ParamId::Start { agent: j, axis: 0 });
            for m in 0..a.tau.len() {
                ids.push(ParamId::MoveTime { agent: j, index: m });
            }
            for m in 0..a.omega.len() {
                ids.push(ParamId::DwellTime { agent: j, index: m });
            }
        }
        ParamLayout::new(ids)
    }

    fn param_count(&self) -> usize {
        1 + self
            .agents
            .iter()
            .map(|a| 1 + a.tau.len() + a.omega.len())
            .sum::<usize>()
    }

    fn position(&self, agent: usize, q: f64, out: &mut [f64]) {
        out[0] = position_1d(self, agent, q).expect("validated params");
    }

    fn velocity(&self, agent: usize, q: f64, out: &mut [f64]) {
        out[0] = velocity_1d(self, agent, q);
    }

    fn acceleration(&self, _agent: usize, _q: f64, out: &mut [f64]) {
        out[0] = 0.0;
    }

    fn position_jacobian(&self, agent: usize, q: f64, jac: &mut DMatrix<f64>) {
        jac.fill(0.0);
        let g = position_gradients_1d(self, agent, q);
        let mut d = 0;
        jac[(0, d)] = g.d_period;
        d += 1;
        for (j, a) in self.agents.iter().enumerate() {
            let block = 1 + 2 * a.tau.len();
            if j != agent {
                d += block;
                continue;
            }
            jac[(0, d)] = g.d_start;
            for m in 0..a.tau.len() {
                jac[(0, d + 1 + m)] = g.d_tau[m];
            }
            for m in 0..a.omega.len() {
                jac[(0, d + 1 + a.tau.len() + m)] = g.d_omega[m];
            }
            d += block;
        }
    }

    fn velocity_jacobian(&self, agent: usize, q: f64, jac: &mut DMatrix<f64>) {
        jac.fill(0.0);
        // Within a segment the velocity is 0 or +-T u; only the period enters
        // smoothly. Segment-index changes are events of measure zero.
        if let Segment::Move { m, .. } = locate(&self.agents[agent], q) {
            jac[(0, 0)] = direction(m) * self.u_max[agent];
        }
    }

    fn effort_rate(&self) -> f64 {
        self.agents
            .iter()
            .zip(self.u_max.iter())
            .map(|(a, u)| u * u * a.tau.iter().sum::<f64>())
            .sum()
    }

    fn effort_rate_gradient(&self, out: &mut [f64]) {
        out.fill(0.0);
        let mut d = 1;
        for (a, u) in self.agents.iter().zip(self.u_max.iter()) {
            d += 1; // start position
            for _ in 0..a.tau.len() {
                out[d] = u * u;
                d += 1;
            }
            d += a.omega.len();
        }
    }

    fn project(&self) -> Result<Self> {
        project_params_1d(self)
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut v = vec![self.period];
        for a in &self.agents {
            v.push(a.s0);
            v.extend_from_slice(&a.tau);
            v.extend_from_slice(&a.omega);
        }
        v
    }

    fn with_flat(&self, values: &[f64]) -> Result<Self> {
        if values.len() != self.param_count() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                values.len()
            )));
        }
        let mut out = self.clone();
        out.period = values[0];
        let mut d = 1;
        for a in &mut out.agents {
            a.s0 = values[d];
            d += 1;
            let n = a.tau.len();
            a.tau.copy_from_slice(&values[d..d + n]);
            d += n;
            a.omega.copy_from_slice(&values[d..d + n]);
            d += n;
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Piecewise-constant control policies over a finite horizon.

/// One agent's piecewise-constant control: `controls[i]` applies on
/// `[breakpoints[i], breakpoints[i+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPolicy1d {
    pub s0: f64,
    pub breakpoints: Vec<f64>,
    pub controls: Vec<f64>,
}

impl AgentPolicy1d {
    pub fn validate(&self, horizon: f64, u_max: f64) -> Result<()> {
        if self.breakpoints.len() != self.controls.len() + 1 {
            return Err(Error::invalid("breakpoints must be one longer than controls"));
        }
        if self.breakpoints.first() != Some(&0.0) {
            return Err(Error::invalid("policy must start at t = 0"));
        }
        let last = *self.breakpoints.last().unwrap();
        if (last - horizon).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "policy ends at {last}, horizon is {horizon}"
            )));
        }
        if self.breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("breakpoints must be strictly increasing"));
        }
        if self.controls.iter().any(|u| u.abs() > u_max + 1e-12) {
            return Err(Error::invalid("control exceeds the speed bound"));
        }
        Ok(())
    }

    /// Position at time `t` under the piecewise-constant control.
    pub fn position(&self, t: f64) -> f64 {
        let mut s = self.s0;
        for (i, u) in self.controls.iter().enumerate() {
            let a = self.breakpoints[i];
            let b = self.breakpoints[i + 1];
            if t <= a {
                break;
            }
            s += u * (t.min(b) - a);
        }
        s
    }

    /// Number of control discontinuities.
    pub fn switch_count(&self) -> usize {
        self.controls.windows(2).filter(|w| w[0] != w[1]).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy1d {
    pub horizon: f64,
    pub agents: Vec<AgentPolicy1d>,
}

impl Policy1d {
    /// Expand dwell/move parameters into an explicit control policy over
    /// `horizon` time units, repeating periods as needed.
    pub fn from_params(params: &Params1d, horizon: f64) -> Result<Policy1d> {
        params.check_segments()?;
        if horizon <= 0.0 {
            return Err(Error::invalid("policy horizon must be positive"));
        }
        if params.period <= 0.0 {
            return Err(Error::invalid("period must be positive"));
        }
        let mut agents = Vec::with_capacity(params.agents.len());
        for (j, a) in params.agents.iter().enumerate() {
            let u = params.u_max[j];
            let mut breakpoints = vec![0.0];
            let mut controls = Vec::new();
            let push = |breakpoints: &mut Vec<f64>, controls: &mut Vec<f64>, end: f64, u: f64| {
                let last = *breakpoints.last().unwrap();
                if end > last + 1e-12 && last < horizon {
                    breakpoints.push(end.min(horizon));
                    controls.push(u);
                }
            };
            let mut cycle = 0usize;
            'outer: loop {
                let base = cycle as f64 * params.period;
                if base >= horizon {
                    break;
                }
                let mut t = base;
                for m in 0..a.tau.len() {
                    let dwell_end = t + a.omega[m] * params.period;
                    push(&mut breakpoints, &mut controls, dwell_end, 0.0);
                    t = dwell_end;
                    let move_end = t + a.tau[m] * params.period;
                    push(&mut breakpoints, &mut controls, move_end, direction(m) * u);
                    t = move_end;
                    if t >= horizon {
                        break 'outer;
                    }
                }
                // Tail dwell up to the period end.
                push(&mut breakpoints, &mut controls, base + params.period, 0.0);
                cycle += 1;
            }
            push(&mut breakpoints, &mut controls, horizon, 0.0);
            // Merge equal neighbors.
            let (breakpoints, controls) = merge_segments(breakpoints, controls);
            agents.push(AgentPolicy1d {
                s0: a.s0,
                breakpoints,
                controls,
            });
        }
        Ok(Policy1d { horizon, agents })
    }

    pub fn validate(&self, u_max: &[f64]) -> Result<()> {
        if self.agents.len() != u_max.len() {
            return Err(Error::invalid("one speed bound per agent required"));
        }
        for (a, u) in self.agents.iter().zip(u_max) {
            a.validate(self.horizon, *u)?;
        }
        Ok(())
    }
}

pub(crate) fn merge_segments(breakpoints: Vec<f64>, controls: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    let mut bp = Vec::with_capacity(breakpoints.len());
    let mut cs: Vec<f64> = Vec::with_capacity(controls.len());
    bp.push(breakpoints[0]);
    for (i, u) in controls.iter().enumerate() {
        if let Some(last) = cs.last() {
            if (last - u).abs() < 1e-12 {
                *bp.last_mut().unwrap() = breakpoints[i + 1];
                continue;
            }
        }
        bp.push(breakpoints[i + 1]);
        cs.push(*u);
    }
    // bp currently has one entry per distinct segment end plus the start.
    (bp, cs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn square_wave() -> Params1d {
        Params1d::new(
            4.0,
            vec![AgentParams1d {
                s0: 0.0,
                tau: vec![0.25, 0.25],
                omega: vec![0.25, 0.25],
            }],
            vec![1.0],
        )
        .unwrap()
    }

    #[test]
    fn position_piecewise_values() {
        let p = square_wave();
        assert_relative_eq!(position_1d(&p, 0, 0.375).unwrap(), 0.5);
        assert_relative_eq!(position_1d(&p, 0, 0.5).unwrap(), 1.0);
        assert_relative_eq!(position_1d(&p, 0, 0.75).unwrap(), 1.0);
        assert_relative_eq!(position_1d(&p, 0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn no_moves_means_constant_position() {
        let mut p = square_wave();
        p.agents[0].tau = vec![0.0, 0.0];
        for q in [0.0, 0.3, 0.7, 1.0] {
            assert_relative_eq!(position_1d(&p, 0, q).unwrap(), 0.0);
        }
    }

    #[test]
    fn closure_returns_to_start_at_segment_end() {
        // End of the last segment, before the tail dwell.
        let mut p = square_wave();
        p.agents[0].omega = vec![0.1, 0.1];
        let q_end = 0.25 + 0.25 + 0.1 + 0.1;
        assert_relative_eq!(position_1d(&p, 0, q_end).unwrap(), 0.0, epsilon = 1e-12);
        assert_relative_eq!(position_1d(&p, 0, 1.0).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_infeasible_segments() {
        let mut p = square_wave();
        p.agents[0].tau = vec![0.5, 0.6];
        assert!(position_1d(&p, 0, 0.5).is_err());
        p.agents[0].tau = vec![-0.1, 0.1];
        assert!(position_1d(&p, 0, 0.5).is_err());
    }

    #[test]
    fn gradients_first_dwell_and_second_dwell() {
        let p = square_wave();
        // First dwell: only the start position matters.
        let g = position_gradients_1d(&p, 0, 0.1);
        assert!(g.d_tau.iter().all(|v| *v == 0.0));
        assert!(g.d_omega.iter().all(|v| *v == 0.0));
        assert_relative_eq!(g.d_period, 0.0);
        assert_relative_eq!(g.d_start, 1.0);
        // Second dwell at q = 0.75 (s = 1, s0 = 0, T = 4).
        let g = position_gradients_1d(&p, 0, 0.75);
        assert_relative_eq!(g.d_period, 0.25);
        assert_relative_eq!(g.d_tau[0], 4.0);
        assert_relative_eq!(g.d_tau[1], 0.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = Params1d::new(
            3.0,
            vec![AgentParams1d {
                s0: 0.4,
                tau: vec![0.2, 0.1, 0.15, 0.05],
                omega: vec![0.1, 0.05, 0.1, 0.05],
            }],
            vec![1.3],
        )
        .unwrap();
        let h = 1e-7;
        let flat = p.to_flat();
        // Interior sample points, away from segment boundaries.
        for &q in &[0.05, 0.17, 0.33, 0.41, 0.52, 0.66, 0.74, 0.88, 0.97] {
            let g = position_gradients_1d(&p, 0, q);
            let grads: Vec<f64> = std::iter::once(g.d_period)
                .chain(std::iter::once(g.d_start))
                .chain(g.d_tau.iter().cloned())
                .chain(g.d_omega.iter().cloned())
                .collect();
            for (d, want) in grads.iter().enumerate() {
                let mut up = flat.clone();
                up[d] += h;
                let mut dn = flat.clone();
                dn[d] -= h;
                let fp = position_1d(&p.with_flat(&up).unwrap(), 0, q).unwrap();
                let fm = position_1d(&p.with_flat(&dn).unwrap(), 0, q).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                assert!(
                    (fd - want).abs() < 1e-6,
                    "param {d} at q={q}: fd {fd} vs analytic {want}"
                );
            }
        }
    }

    #[test]
    fn projection_keeps_feasible_points() {
        let p = square_wave();
        let proj = project_params_1d(&p).unwrap();
        assert_eq!(p, proj);
    }

    #[test]
    fn projection_repairs_negative_and_unbalanced() {
        let mut p = square_wave();
        p.agents[0].tau = vec![-0.1, 0.1];
        p.agents[0].omega = vec![0.0, 0.0];
        let proj = project_params_1d(&p).unwrap();
        assert!(proj.is_feasible(1e-9));
        // Nearest feasible point of (-0.1, 0.1) on the balanced nonnegative
        // set is the origin (KKT: tau1 = tau2 = c minimizes at c = 0).
        assert!(proj.agents[0].tau[0].abs() < 1e-9);
        assert!(proj.agents[0].tau[1].abs() < 1e-9);
    }

    #[test]
    fn projection_shrinks_onto_budget() {
        let mut p = square_wave();
        p.agents[0].tau = vec![0.3, 0.3];
        p.agents[0].omega = vec![0.3, 0.3];
        let proj = project_params_1d(&p).unwrap();
        // Uniform shift onto the halfspace boundary keeps balance and
        // nonnegativity, so it is the exact projection.
        for v in proj.agents[0].tau.iter().chain(proj.agents[0].omega.iter()) {
            assert_relative_eq!(*v, 0.25, epsilon = 1e-9);
        }
    }

    #[test]
    fn projection_rejects_nan() {
        let mut p = square_wave();
        p.agents[0].tau[0] = f64::NAN;
        assert!(matches!(
            project_params_1d(&p),
            Err(Error::ProjectionFailure(_))
        ));
    }

    #[test]
    fn policy_expansion_round_trip() {
        let p = square_wave();
        let policy = Policy1d::from_params(&p, 8.0).unwrap();
        policy.validate(&[1.0]).unwrap();
        for &t in &[0.0, 1.5, 2.0, 3.0, 4.0, 5.5, 6.0, 8.0] {
            let q = (t / 4.0f64).rem_euclid(1.0);
            let q = if q == 0.0 && t > 0.0 { 1.0 } else { q };
            assert_relative_eq!(
                policy.agents[0].position(t),
                position_1d(&p, 0, q).unwrap(),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn flat_round_trip() {
        let p = square_wave();
        let flat = p.to_flat();
        let q = p.with_flat(&flat).unwrap();
        assert_eq!(p, q);
        assert_eq!(flat.len(), p.param_count());
        assert_eq!(p.layout().len(), p.param_count());
    }
}
