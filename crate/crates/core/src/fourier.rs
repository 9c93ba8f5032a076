//! Truncated Fourier series trajectories for multi-dimensional workspaces.
//!
//! Each coordinate of each agent follows
//! `s(q) = s0 + sum_k a_k sin(2 pi f_k q) + b_k (cos(2 pi f_k q) - 1)`
//! with integer frequencies, so the motion has period one in normalized time
//! and starts exactly at `s0`.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamLayout, Parameterization};

/// Periods are clamped to stay above this during descent.
pub const MIN_PERIOD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentFourier {
    /// Initial position, one entry per axis.
    pub s0: Vec<f64>,
    /// Sine coefficients, `a[axis][harmonic]`.
    pub a: Vec<Vec<f64>>,
    /// Cosine coefficients, `b[axis][harmonic]`.
    pub b: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamsFourier {
    pub period: f64,
    pub frequencies: Vec<u32>,
    pub agents: Vec<AgentFourier>,
    pub dim: usize,
}

impl ParamsFourier {
    pub fn new(
        period: f64,
        frequencies: Vec<u32>,
        agents: Vec<AgentFourier>,
        dim: usize,
    ) -> Result<Self> {
        if period <= 0.0 {
            return Err(Error::invalid("period must be positive"));
        }
        if frequencies.is_empty()
            || frequencies[0] < 1
            || frequencies.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::invalid(
                "frequencies must be strictly increasing positive integers",
            ));
        }
        let k = frequencies.len();
        for (j, agent) in agents.iter().enumerate() {
            if agent.s0.len() != dim || agent.a.len() != dim || agent.b.len() != dim {
                return Err(Error::invalid(format!(
                    "agent {j}: expected {dim} axes in s0/a/b"
                )));
            }
            if agent
                .a
                .iter()
                .chain(agent.b.iter())
                .any(|row| row.len() != k)
            {
                return Err(Error::invalid(format!(
                    "agent {j}: expected {k} harmonics per axis"
                )));
            }
        }
        Ok(ParamsFourier {
            period,
            frequencies,
            agents,
            dim,
        })
    }

    /// All-zero coefficients: every agent parks at its initial position.
    pub fn stationary(period: f64, frequencies: Vec<u32>, starts: Vec<Vec<f64>>, dim: usize) -> Result<Self> {
        let k = frequencies.len();
        let agents = starts
            .into_iter()
            .map(|s0| AgentFourier {
                s0,
                a: vec![vec![0.0; k]; dim],
                b: vec![vec![0.0; k]; dim],
            })
            .collect();
        ParamsFourier::new(period, frequencies, agents, dim)
    }

    pub fn harmonics(&self) -> usize {
        self.frequencies.len()
    }
}

/// Position of one agent at normalized time `q`.
pub fn fourier_position(params: &ParamsFourier, agent: usize, q: f64) -> Vec<f64> {
    let a = &params.agents[agent];
    let mut out = a.s0.clone();
    for (k, &f) in params.frequencies.iter().enumerate() {
        let arg = TAU * f as f64 * q;
        let (sin, cos) = arg.sin_cos();
        for p in 0..params.dim {
            out[p] += a.a[p][k] * sin + a.b[p][k] * (cos - 1.0);
        }
    }
    out
}

/// Partial derivatives of one coordinate with respect to the agent's own
/// parameters; cross-agent and cross-axis components vanish and `ds/dT = 0`
/// at fixed normalized time.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierGradients {
    pub d_a: Vec<f64>,
    pub d_b: Vec<f64>,
    pub d_s0: f64,
    pub d_period: f64,
}

pub fn fourier_position_gradients(params: &ParamsFourier, q: f64) -> FourierGradients {
    let k = params.harmonics();
    let mut d_a = Vec::with_capacity(k);
    let mut d_b = Vec::with_capacity(k);
    for &f in &params.frequencies {
        let arg = TAU * f as f64 * q;
        let (sin, cos) = arg.sin_cos();
        d_a.push(sin);
        d_b.push(cos - 1.0);
    }
    FourierGradients {
        d_a,
        d_b,
        d_s0: 1.0,
        d_period: 0.0,
    }
}

/// Control effort per normalized time, `int_0^1 |ds/dt|^2 dq`, and its
/// gradient with respect to every parameter. By harmonic orthogonality the
/// integral is `sum (2 pi f_k)^2 (a^2 + b^2) / (2 T^2)`.
pub fn effort_and_gradients(params: &ParamsFourier) -> Result<(f64, Vec<f64>)> {
    if params.period <= 0.0 {
        return Err(Error::invalid("period must be positive"));
    }
    let t2 = params.period * params.period;
    let mut effort = 0.0;
    let mut grad = vec![0.0; params.param_count()];
    let k = params.harmonics();
    let mut d = 1; // skip the period slot for now
    for agent in &params.agents {
        d += params.dim; // start positions carry no effort
        for p in 0..params.dim {
            for (kk, &f) in params.frequencies.iter().enumerate() {
                let w2 = (TAU * f as f64).powi(2);
                let (a, b) = (agent.a[p][kk], agent.b[p][kk]);
                effort += w2 / (2.0 * t2) * (a * a + b * b);
                grad[d + kk] = w2 * a / t2;
                grad[d + k + kk] = w2 * b / t2;
            }
            d += 2 * k;
        }
    }
    grad[0] = -2.0 * effort / params.period;
    Ok((effort, grad))
}

impl Parameterization for ParamsFourier {
    fn dim(&self) -> usize {
        self.dim
    }

    fn agent_count(&self) -> usize {
        self.agents.len()
    }

    fn period(&self) -> f64 {
        self.period
    }

    fn layout(&self) -> ParamLayout {
        let k = self.harmonics();
        let mut ids = vec![ParamId::Period];
        for j in 0..self.agents.len() {
            for axis in 0..self.dim {
                ids.push(ParamId::Start { agent: j, axis });
            }
            for axis in 0..self.dim {
                for h in 0..k {
                    ids.push(ParamId::SineCoeff { agent: j, axis, harmonic: h });
                }
                for h in 0..k {
                    ids.push(ParamId::CosineCoeff { agent: j, axis, harmonic: h });
                }
            }
        }
        ParamLayout::new(ids)
    }

    fn param_count(&self) -> usize {
        1 + self.agents.len() * (self.dim + 2 * self.dim * self.harmonics())
    }

    fn position(&self, agent: usize, q: f64, out: &mut [f64]) {
        out.copy_from_slice(&fourier_position(self, agent, q));
    }

    fn velocity(&self, agent: usize, q: f64, out: &mut [f64]) {
        let a = &self.agents[agent];
        out.fill(0.0);
        for (k, &f) in self.frequencies.iter().enumerate() {
            let w = TAU * f as f64;
            let (sin, cos) = (w * q).sin_cos();
            for p in 0..self.dim {
                out[p] += w * (a.a[p][k] * cos - a.b[p][k] * sin);
            }
        }
    }

    fn acceleration(&self, agent: usize, q: f64, out: &mut [f64]) {
        let a = &self.agents[agent];
        out.fill(0.0);
        for (k, &f) in self.frequencies.iter().enumerate() {
            let w = TAU * f as f64;
            let (sin, cos) = (w * q).sin_cos();
            for p in 0..self.dim {
                out[p] -= w * w * (a.a[p][k] * sin + a.b[p][k] * cos);
            }
        }
    }

    fn position_jacobian(&self, agent: usize, q: f64, jac: &mut DMatrix<f64>) {
        jac.fill(0.0);
        let k = self.harmonics();
        let g = fourier_position_gradients(self, q);
        let block = self.dim + 2 * self.dim * k;
        let base = 1 + agent * block;
        for p in 0..self.dim {
            jac[(p, base + p)] = 1.0;
            let axis_base = base + self.dim + p * 2 * k;
            for kk in 0..k {
                jac[(p, axis_base + kk)] = g.d_a[kk];
                jac[(p, axis_base + k + kk)] = g.d_b[kk];
            }
        }
    }

    fn velocity_jacobian(&self, agent: usize, q: f64, jac: &mut DMatrix<f64>) {
        jac.fill(0.0);
        let k = self.harmonics();
        let block = self.dim + 2 * self.dim * k;
        let base = 1 + agent * block;
        for (kk, &f) in self.frequencies.iter().enumerate() {
            let w = TAU * f as f64;
            let (sin, cos) = (w * q).sin_cos();
            for p in 0..self.dim {
                let axis_base = base + self.dim + p * 2 * k;
                jac[(p, axis_base + kk)] = w * cos;
                jac[(p, axis_base + k + kk)] = -w * sin;
            }
        }
    }

    fn effort_rate(&self) -> f64 {
        effort_and_gradients(self).expect("positive period").0
    }

    fn effort_rate_gradient(&self, out: &mut [f64]) {
        let (_, grad) = effort_and_gradients(self).expect("positive period");
        out.copy_from_slice(&grad);
    }

    /// Unbounded speed: the feasible set is open except for the period floor.
    fn project(&self) -> Result<Self> {
        let mut out = self.clone();
        out.period = out.period.max(MIN_PERIOD);
        if !out.period.is_finite() {
            return Err(Error::ProjectionFailure(0));
        }
        Ok(out)
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut v = vec![self.period];
        for agent in &self.agents {
            v.extend_from_slice(&agent.s0);
            for p in 0..self.dim {
                v.extend_from_slice(&agent.a[p]);
                v.extend_from_slice(&agent.b[p]);
            }
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
        let k = self.harmonics();
        let mut d = 1;
        for agent in &mut out.agents {
            agent.s0.copy_from_slice(&values[d..d + self.dim]);
            d += self.dim;
            for p in 0..self.dim {
                agent.a[p].copy_from_slice(&values[d..d + k]);
                d += k;
                agent.b[p].copy_from_slice(&values[d..d + k]);
                d += k;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single_harmonic(a: f64, b: f64) -> ParamsFourier {
        ParamsFourier::new(
            1.0,
            vec![1],
            vec![AgentFourier {
                s0: vec![0.0],
                a: vec![vec![a]],
                b: vec![vec![b]],
            }],
            1,
        )
        .unwrap()
    }

    #[test]
    fn sine_only_positions() {
        let p = single_harmonic(1.0, 0.0);
        assert_relative_eq!(fourier_position(&p, 0, 0.0)[0], 0.0);
        assert_relative_eq!(fourier_position(&p, 0, 0.25)[0], 1.0);
        assert_relative_eq!(fourier_position(&p, 0, 0.5)[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn cosine_only_positions() {
        let p = single_harmonic(0.0, 1.0);
        assert_relative_eq!(fourier_position(&p, 0, 0.0)[0], 0.0);
        assert_relative_eq!(fourier_position(&p, 0, 0.5)[0], -2.0);
    }

    #[test]
    fn gradient_values_at_quarter_period() {
        let p = single_harmonic(0.3, -0.2);
        let g = fourier_position_gradients(&p, 0.25);
        assert_relative_eq!(g.d_a[0], 1.0);
        assert_relative_eq!(g.d_b[0], -1.0);
        assert_relative_eq!(g.d_s0, 1.0);
        assert_relative_eq!(g.d_period, 0.0);
    }

    #[test]
    fn effort_single_harmonic() {
        let p = single_harmonic(1.0, 0.0);
        let (effort, grad) = effort_and_gradients(&p).unwrap();
        assert_relative_eq!(effort, 2.0 * std::f64::consts::PI.powi(2), epsilon = 1e-12);
        // d/dT at T = 2: -(2 pi)^2 / 8.
        let mut p2 = p.clone();
        p2.period = 2.0;
        let (_, grad2) = effort_and_gradients(&p2).unwrap();
        assert_relative_eq!(grad2[0], -std::f64::consts::PI.powi(2) / 2.0, epsilon = 1e-12);
        // Gradient slots: [T, s0, a, b].
        assert_eq!(grad.len(), 4);
        assert_relative_eq!(grad[1], 0.0);
    }

    #[test]
    fn effort_gradients_match_finite_differences() {
        let p = ParamsFourier::new(
            1.7,
            vec![1, 2, 5],
            vec![AgentFourier {
                s0: vec![0.2, -0.1],
                a: vec![vec![0.4, -0.3, 0.1], vec![0.0, 0.2, -0.5]],
                b: vec![vec![-0.2, 0.6, 0.05], vec![0.3, -0.4, 0.25]],
            }],
            2,
        )
        .unwrap();
        let (_, grad) = effort_and_gradients(&p).unwrap();
        let flat = p.to_flat();
        let h = 1e-6;
        for d in 0..flat.len() {
            let mut up = flat.clone();
            up[d] += h;
            let mut dn = flat.clone();
            dn[d] -= h;
            let fu = effort_and_gradients(&p.with_flat(&up).unwrap()).unwrap().0;
            let fd = effort_and_gradients(&p.with_flat(&dn).unwrap()).unwrap().0;
            let fdiff = (fu - fd) / (2.0 * h);
            assert!(
                (fdiff - grad[d]).abs() <= 1e-8 * fdiff.abs().max(1.0),
                "param {d}: fd {fdiff} vs analytic {}",
                grad[d]
            );
        }
    }

    #[test]
    fn position_gradients_match_finite_differences() {
        let p = ParamsFourier::new(
            1.0,
            vec![1, 3],
            vec![AgentFourier {
                s0: vec![0.1, 0.4],
                a: vec![vec![0.2, -0.1], vec![0.5, 0.3]],
                b: vec![vec![0.7, 0.2], vec![-0.3, 0.1]],
            }],
            2,
        )
        .unwrap();
        let flat = p.to_flat();
        let mut jac = DMatrix::zeros(2, p.param_count());
        // Five-point central stencil: fourth-order truncation keeps the
        // oracle error near 1e-11 for these harmonics.
        let h = 4e-5;
        for &q in &[0.13, 0.47, 0.81] {
            p.position_jacobian(0, q, &mut jac);
            for d in 0..flat.len() {
                let eval = |shift: f64| -> Vec<f64> {
                    let mut v = flat.clone();
                    v[d] += shift;
                    fourier_position(&p.with_flat(&v).unwrap(), 0, q)
                };
                let (s2u, s1u, s1d, s2d) =
                    (eval(2.0 * h), eval(h), eval(-h), eval(-2.0 * h));
                for axis in 0..2 {
                    let fd = (-s2u[axis] + 8.0 * s1u[axis] - 8.0 * s1d[axis] + s2d[axis])
                        / (12.0 * h);
                    assert!(
                        (fd - jac[(axis, d)]).abs() < 1e-10,
                        "axis {axis} param {d} at q={q}: fd {fd} vs {}",
                        jac[(axis, d)]
                    );
                }
            }
        }
    }

    #[test]
    fn velocity_matches_position_difference() {
        let p = single_harmonic(0.5, -0.8);
        let mut v = [0.0];
        let h = 1e-6;
        for &q in &[0.1, 0.35, 0.77] {
            p.velocity(0, q, &mut v);
            let fd = (fourier_position(&p, 0, q + h)[0] - fourier_position(&p, 0, q - h)[0])
                / (2.0 * h);
            assert_relative_eq!(v[0], fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn rejects_bad_frequencies() {
        assert!(ParamsFourier::stationary(1.0, vec![], vec![vec![0.0]], 1).is_err());
        assert!(ParamsFourier::stationary(1.0, vec![0], vec![vec![0.0]], 1).is_err());
        assert!(ParamsFourier::stationary(1.0, vec![2, 2], vec![vec![0.0]], 1).is_err());
        assert!(ParamsFourier::stationary(-1.0, vec![1], vec![vec![0.0]], 1).is_err());
    }
}
