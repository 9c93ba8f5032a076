//! Feasible initial trajectories: a min-max multi-tour heuristic over the
//! target positions, a direct conversion to dwell/move parameters on a line,
//! and a waypoint-constrained Fourier fit for higher dimensions.
//!
//! Starting from a schedule that visits every target matters: a target that
//! is never sensed contributes no gradient signal to its parameters and an
//! unstable one makes the steady-state cost undefined.

mod fit;
mod mtsp;

pub use fit::{fourier_fit, FitConfig};
pub use mtsp::{mtsp_solve, GaConfig};

use crate::error::{Error, Result};
use crate::scenario::{Scenario, SpeedBound};
use crate::traj1d::{AgentParams1d, Params1d};

/// Cyclic visit schedule produced by the tour heuristic.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub tours: Vec<AgentTour>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentTour {
    /// Target indices in cyclic visit order.
    pub targets: Vec<usize>,
    /// Distance traveled when reaching each scheduled target; starts at 0.
    pub cumulative: Vec<f64>,
    /// Full cycle length including the closing leg.
    pub total: f64,
}

impl Schedule {
    /// Longest cycle over all agents.
    pub fn max_tour(&self) -> f64 {
        self.tours.iter().map(|t| t.total).fold(0.0, f64::max)
    }

    pub fn covers_all(&self, n_targets: usize) -> bool {
        let mut seen = vec![false; n_targets];
        for tour in &self.tours {
            for &t in &tour.targets {
                seen[t] = true;
            }
        }
        seen.iter().all(|s| *s)
    }
}

/// Convert a schedule into dwell/move parameters tracing each tour at full
/// speed. The common period is set by the slowest agent; agents with shorter
/// tours receive a leading dwell so every trajectory closes in the same
/// period. Dwelling times on targets start at zero.
pub fn schedule_to_params_1d(schedule: &Schedule, scenario: &Scenario) -> Result<Params1d> {
    if scenario.dim != 1 {
        return Err(Error::invalid(
            "dwell/move parameters require a 1D workspace",
        ));
    }
    let mut speeds = Vec::with_capacity(scenario.agents.len());
    for agent in &scenario.agents {
        match agent.u_max {
            SpeedBound::Bounded(u) => speeds.push(u),
            SpeedBound::Unbounded => {
                return Err(Error::invalid(format!(
                    "agent {} needs a finite speed bound for dwell/move initialization",
                    agent.id
                )))
            }
        }
    }
    if schedule.tours.len() != scenario.agents.len() {
        return Err(Error::invalid("schedule does not match the agent roster"));
    }

    let period = schedule
        .tours
        .iter()
        .zip(speeds.iter())
        .map(|(tour, u)| tour.total / u)
        .fold(0.0, f64::max);
    if period <= 0.0 {
        // Every agent parks on a single target; any positive period works.
        let agents = parked_agents(schedule, scenario);
        return Params1d::new(1.0, agents, speeds);
    }

    let mut agents = Vec::with_capacity(schedule.tours.len());
    for (j, tour) in schedule.tours.iter().enumerate() {
        let u = speeds[j];
        if tour.targets.is_empty() {
            agents.push(park_at(scenario, j));
            continue;
        }
        let positions: Vec<f64> = tour
            .targets
            .iter()
            .map(|&i| scenario.targets[i].position[0])
            .collect();
        let s0 = positions[0];
        // Legs of the cyclic tour, including the closing one.
        let mut legs = Vec::with_capacity(positions.len());
        for w in 0..positions.len() {
            let next = positions[(w + 1) % positions.len()];
            legs.push(next - positions[w]);
        }
        // Encode as alternating-direction moves, inserting zero-length moves
        // when consecutive legs share a direction.
        let mut tau = Vec::new();
        let mut dir = 1.0;
        for leg in legs {
            if leg == 0.0 {
                continue;
            }
            while leg.signum() != dir {
                tau.push(0.0);
                dir = -dir;
            }
            tau.push(leg.abs() / (u * period));
            dir = -dir;
        }
        let mut omega = vec![0.0; tau.len()];
        let slack = 1.0 - tau.iter().sum::<f64>();
        if !omega.is_empty() {
            omega[0] = slack.max(0.0);
        }
        agents.push(AgentParams1d { s0, tau, omega });
    }
    Params1d::new(period, agents, speeds)
}

fn parked_agents(schedule: &Schedule, scenario: &Scenario) -> Vec<AgentParams1d> {
    (0..schedule.tours.len())
        .map(|j| {
            if let Some(&first) = schedule.tours[j].targets.first() {
                AgentParams1d {
                    s0: scenario.targets[first].position[0],
                    tau: vec![],
                    omega: vec![],
                }
            } else {
                park_at(scenario, j)
            }
        })
        .collect()
}

/// Idle agents park on some target so their sensing is not wasted.
fn park_at(scenario: &Scenario, agent: usize) -> AgentParams1d {
    let i = agent % scenario.targets.len();
    AgentParams1d {
        s0: scenario.targets[i].position[0],
        tau: vec![],
        omega: vec![],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Scenario;
    use crate::traj1d::{position_1d, project_params_1d};
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn line_scenario(positions: &[f64], agents: usize) -> Scenario {
        let targets: Vec<String> = positions
            .iter()
            .map(|x| {
                format!(
                    r#"{{"position": [{x}], "A": [[0.0]], "Q": [[1.0]],
                       "H": [[1.0]], "R": [[1.0]], "radius": 0.9}}"#
                )
            })
            .collect();
        let agents: Vec<String> = (0..agents).map(|_| r#"{"u_max": 1.0}"#.to_string()).collect();
        Scenario::from_json(&format!(
            r#"{{"dimension": 1, "beta": 0.0, "mode": "steady",
                "targets": [{}], "agents": [{}]}}"#,
            targets.join(","),
            agents.join(",")
        ))
        .unwrap()
    }

    fn tour_of(positions: &[DVector<f64>], order: &[usize]) -> AgentTour {
        let mut cumulative = vec![0.0];
        for w in 1..order.len() {
            let d = (&positions[order[w]] - &positions[order[w - 1]]).norm();
            cumulative.push(cumulative[w - 1] + d);
        }
        let closing = (&positions[order[0]] - &positions[order[order.len() - 1]]).norm();
        AgentTour {
            targets: order.to_vec(),
            total: cumulative.last().unwrap() + closing,
            cumulative,
        }
    }

    #[test]
    fn out_and_back_two_targets() {
        let scenario = line_scenario(&[0.0, 2.0], 1);
        let positions: Vec<DVector<f64>> =
            scenario.targets.iter().map(|t| t.position.clone()).collect();
        let schedule = Schedule {
            tours: vec![tour_of(&positions, &[0, 1])],
        };
        let params = schedule_to_params_1d(&schedule, &scenario).unwrap();
        assert_relative_eq!(params.period, 4.0);
        assert_eq!(params.agents[0].tau, vec![0.5, 0.5]);
        assert_eq!(params.agents[0].omega, vec![0.0, 0.0]);
        assert_relative_eq!(params.agents[0].s0, 0.0);
        // Already feasible: projection leaves it unchanged.
        let projected = project_params_1d(&params).unwrap();
        assert_eq!(params, projected);
    }

    #[test]
    fn trajectory_passes_through_every_target() {
        let scenario = line_scenario(&[0.0, 3.0, 1.0, 5.0], 1);
        let positions: Vec<DVector<f64>> =
            scenario.targets.iter().map(|t| t.position.clone()).collect();
        // Deliberately unsorted order: direction padding has to kick in.
        let schedule = Schedule {
            tours: vec![tour_of(&positions, &[0, 3, 1, 2])],
        };
        let params = schedule_to_params_1d(&schedule, &scenario).unwrap();
        assert!(params.is_feasible(1e-9));
        for target in &scenario.targets {
            let x = target.position[0];
            let mut best = f64::INFINITY;
            for k in 0..=2000 {
                let q = k as f64 / 2000.0;
                best = best.min((position_1d(&params, 0, q).unwrap() - x).abs());
            }
            assert!(best < 1e-6, "target at {x} missed by {best}");
        }
    }

    #[test]
    fn single_target_parks() {
        let scenario = line_scenario(&[1.5], 2);
        let schedule = Schedule {
            tours: vec![
                AgentTour { targets: vec![0], cumulative: vec![0.0], total: 0.0 },
                AgentTour { targets: vec![], cumulative: vec![], total: 0.0 },
            ],
        };
        let params = schedule_to_params_1d(&schedule, &scenario).unwrap();
        for q in [0.0, 0.5, 1.0] {
            assert_relative_eq!(position_1d(&params, 0, q).unwrap(), 1.5);
            assert_relative_eq!(position_1d(&params, 1, q).unwrap(), 1.5);
        }
    }

    #[test]
    fn shorter_tours_get_leading_dwell() {
        let scenario = line_scenario(&[0.0, 2.0, 10.0, 14.0], 2);
        let positions: Vec<DVector<f64>> =
            scenario.targets.iter().map(|t| t.position.clone()).collect();
        let schedule = Schedule {
            tours: vec![
                tour_of(&positions, &[0, 1]),
                tour_of(&positions, &[2, 3]),
            ],
        };
        let params = schedule_to_params_1d(&schedule, &scenario).unwrap();
        assert_relative_eq!(params.period, 8.0);
        // Agent 0 tours 4 units in a period of 8: half the time dwelling.
        assert_relative_eq!(params.agents[0].omega[0], 0.5);
        assert_relative_eq!(params.agents[1].omega[0], 0.0);
        assert!(params.is_feasible(1e-9));
    }
}
