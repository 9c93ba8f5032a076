//! Common interface over trajectory parameterizations.
//!
//! A parameterization maps a finite parameter vector to the positions of all
//! agents over one normalized period `q in [0, 1]`, together with the exact
//! partial derivatives the gradient assembly needs. The flat parameter
//! ordering is canonical: the period first, then one contiguous block per
//! agent.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ParamId {
    /// The trajectory period `T`.
    Period,
    /// Initial position coordinate of one agent.
    Start { agent: usize, axis: usize },
    /// Normalized movement time (dwell/move parameterization).
    MoveTime { agent: usize, index: usize },
    /// Normalized dwelling time (dwell/move parameterization).
    DwellTime { agent: usize, index: usize },
    /// Sine coefficient (Fourier parameterization).
    SineCoeff { agent: usize, axis: usize, harmonic: usize },
    /// Cosine coefficient (Fourier parameterization).
    CosineCoeff { agent: usize, axis: usize, harmonic: usize },
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamId::Period => write!(f, "T"),
            ParamId::Start { agent, axis } => write!(f, "s0[{agent}][{axis}]"),
            ParamId::MoveTime { agent, index } => write!(f, "tau[{agent}][{index}]"),
            ParamId::DwellTime { agent, index } => write!(f, "omega[{agent}][{index}]"),
            ParamId::SineCoeff { agent, axis, harmonic } => {
                write!(f, "a[{agent}][{axis}][{harmonic}]")
            }
            ParamId::CosineCoeff { agent, axis, harmonic } => {
                write!(f, "b[{agent}][{axis}][{harmonic}]")
            }
        }
    }
}

/// Canonical parameter ordering with an id <-> index map.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    ids: Vec<ParamId>,
}

impl ParamLayout {
    pub fn new(ids: Vec<ParamId>) -> Self {
        ParamLayout { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, index: usize) -> &ParamId {
        &self.ids[index]
    }

    pub fn ids(&self) -> &[ParamId] {
        &self.ids
    }

    pub fn index_of(&self, id: &ParamId) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// Parameter indices belonging to one agent (plus none of the shared ones).
    pub fn agent_indices(&self, agent: usize) -> Vec<usize> {
        self.ids
            .iter()
            .enumerate()
            .filter(|(_, id)| match id {
                ParamId::Period => false,
                ParamId::Start { agent: a, .. }
                | ParamId::MoveTime { agent: a, .. }
                | ParamId::DwellTime { agent: a, .. }
                | ParamId::SineCoeff { agent: a, .. }
                | ParamId::CosineCoeff { agent: a, .. } => *a == agent,
            })
            .map(|(d, _)| d)
            .collect()
    }
}

/// A finitely parameterized family of periodic multi-agent trajectories.
///
/// All q arguments are normalized times in [0, 1]. Derivative conventions at
/// the (measure-zero) event boundaries of piecewise trajectories take the
/// left-segment value.
pub trait Parameterization: Clone {
    /// Workspace dimension `P`.
    fn dim(&self) -> usize;

    fn agent_count(&self) -> usize;

    /// Trajectory period `T`.
    fn period(&self) -> f64;

    fn layout(&self) -> ParamLayout;

    fn param_count(&self) -> usize;

    /// Position of one agent; `out` has length `P`.
    fn position(&self, agent: usize, q: f64, out: &mut [f64]);

    /// Velocity with respect to normalized time, `ds/dq`.
    fn velocity(&self, agent: usize, q: f64, out: &mut [f64]);

    /// Second derivative `d^2 s / dq^2` (zero almost everywhere for
    /// piecewise-linear trajectories).
    fn acceleration(&self, agent: usize, q: f64, out: &mut [f64]);

    /// `jac[(p, d)] = ds^p/dtheta_d` at fixed `q`, over the full layout.
    /// Entries for other agents' parameters are zero.
    fn position_jacobian(&self, agent: usize, q: f64, jac: &mut DMatrix<f64>);

    /// `jac[(p, d)] = d(ds^p/dq)/dtheta_d` at fixed `q`.
    fn velocity_jacobian(&self, agent: usize, q: f64, jac: &mut DMatrix<f64>);

    /// Closed form of `int_0^1 |ds/dt|^2 dq` summed over agents.
    fn effort_rate(&self) -> f64;

    /// Gradient of [`Parameterization::effort_rate`] over the full layout.
    fn effort_rate_gradient(&self, out: &mut [f64]);

    /// Euclidean projection onto the feasible parameter set.
    fn project(&self) -> Result<Self>;

    /// Flat parameter vector in canonical layout order.
    fn to_flat(&self) -> Vec<f64>;

    /// Rebuild from a flat vector with the same structure as `self`.
    fn with_flat(&self, values: &[f64]) -> Result<Self>;
}
