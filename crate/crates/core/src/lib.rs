//! Persistent monitoring of stochastic targets by mobile agents.
//!
//! A finite set of targets with linear stochastic internal states is watched
//! by a smaller set of moving agents whose observation quality decays with
//! distance. The estimation error of the optimal filter is governed by a
//! Riccati covariance ODE driven by the sensed signal power along the agent
//! trajectories. This crate provides:
//!
//! - the scenario model and sensing gains ([`scenario`]),
//! - covariance propagation, periodic limit cycles and their parameter
//!   sensitivities ([`covariance`]),
//! - two trajectory parameterizations: dwell/move sequences on a line
//!   ([`traj1d`]) and truncated Fourier curves in higher dimensions
//!   ([`fourier`]),
//! - visit-schedule initialization via a min-max multi-tour heuristic and a
//!   waypoint-constrained Fourier fit ([`initializer`]),
//! - cost and gradient assembly with projected gradient descent
//!   ([`optimizer`]).

pub mod covariance;
pub mod error;
pub mod eta;
pub mod fourier;
pub mod grid;
pub mod initializer;
pub mod linalg;
pub mod optimizer;
pub mod params;
pub mod scenario;
pub mod traj1d;

pub use error::{Error, Result};
pub use grid::Grid;
