//! Parameter documents, CSV serialization and atomic file writes.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use permon_core::covariance::CovarianceTrajectory;
use permon_core::fourier::{AgentFourier, ParamsFourier};
use permon_core::optimizer::OptimizationLog;
use permon_core::params::Parameterization;
use permon_core::scenario::{Scenario, SpeedBound};
use permon_core::traj1d::{AgentParams1d, Params1d, Policy1d};
use permon_core::Grid;

/// Either parameter family, as stored on disk. The Fourier document is
/// distinguished by its `frequencies` field.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamsDoc {
    Fourier {
        #[serde(rename = "T")]
        period: f64,
        frequencies: Vec<u32>,
        agents: Vec<AgentFourier>,
    },
    OneD {
        #[serde(rename = "T")]
        period: f64,
        agents: Vec<AgentParams1d>,
    },
}

impl ParamsDoc {
    pub fn from_fourier(p: &ParamsFourier) -> Self {
        ParamsDoc::Fourier {
            period: p.period,
            frequencies: p.frequencies.clone(),
            agents: p.agents.clone(),
        }
    }

    pub fn from_1d(p: &Params1d) -> Self {
        ParamsDoc::OneD {
            period: p.period,
            agents: p.agents.clone(),
        }
    }

    pub fn load(path: &Path) -> Result<ParamsDoc> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading parameters {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("parsing parameters {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        atomic_write(path, text.as_bytes())
    }

    /// Attach scenario context (speed bounds, mode) to get a live 1D
    /// parameterization.
    pub fn into_params_1d(self, scenario: &Scenario) -> Result<Params1d> {
        let ParamsDoc::OneD { period, agents } = self else {
            bail!("expected a dwell/move parameter document (no `frequencies` field)");
        };
        let mut speeds = Vec::with_capacity(scenario.agents.len());
        for a in &scenario.agents {
            match a.u_max {
                SpeedBound::Bounded(u) => speeds.push(u),
                SpeedBound::Unbounded => {
                    bail!("agent {} has no speed bound; dwell/move needs one", a.id)
                }
            }
        }
        let mut params = Params1d::new(period, agents, speeds)?;
        if !scenario.mode.is_steady() {
            params = params.transient();
        }
        Ok(params)
    }

    pub fn into_params_fourier(self, scenario: &Scenario) -> Result<ParamsFourier> {
        let ParamsDoc::Fourier {
            period,
            frequencies,
            agents,
        } = self
        else {
            bail!("expected a Fourier parameter document (with a `frequencies` field)");
        };
        Ok(ParamsFourier::new(period, frequencies, agents, scenario.dim)?)
    }
}

/// Write through a temp file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("out")
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// `log.csv`: one row per descent iteration.
pub fn write_log_csv(path: &Path, log: &OptimizationLog) -> Result<()> {
    let mut text = String::from("iteration,cost,grad_norm,step,wall_ms\n");
    for rec in &log.iterations {
        writeln!(
            text,
            "{},{},{},{},{}",
            rec.iteration, rec.cost, rec.grad_norm, rec.step, rec.wall_ms
        )?;
    }
    atomic_write(path, text.as_bytes())
}

/// `trajectory.csv`: positions and physical velocities of every agent on the
/// state grid. In transient mode `q` is time over the horizon; the
/// trajectory phase wraps with the period.
pub fn write_trajectory_csv<P: Parameterization>(
    path: &Path,
    params: &P,
    grid: Grid,
    horizon: Option<f64>,
) -> Result<()> {
    let mut text = String::from("q,agent,axis,position,velocity\n");
    let dim = params.dim();
    let mut pos = vec![0.0; dim];
    let mut vel = vec![0.0; dim];
    let period = params.period();
    for node in 0..=grid.steps() {
        let q = grid.state_q(node);
        let phase = match horizon {
            None => q,
            Some(h) => {
                let w = q * h / period;
                let ph = w.rem_euclid(1.0);
                if ph == 0.0 && w > 0.0 {
                    1.0
                } else {
                    ph
                }
            }
        };
        for agent in 0..params.agent_count() {
            params.position(agent, phase, &mut pos);
            params.velocity(agent, phase, &mut vel);
            for axis in 0..dim {
                writeln!(
                    text,
                    "{},{},{},{},{}",
                    q,
                    agent,
                    axis,
                    pos[axis],
                    vel[axis] / period
                )?;
            }
        }
    }
    atomic_write(path, text.as_bytes())
}

/// `covariance.csv`: trace plus the upper triangle of every target's
/// covariance on the state grid. Columns are sized by the largest state
/// dimension; smaller targets leave the extra cells empty.
pub fn write_covariance_csv(path: &Path, trajectories: &[CovarianceTrajectory]) -> Result<()> {
    let l_max = trajectories
        .iter()
        .map(|t| t.matrices[0].nrows())
        .max()
        .unwrap_or(0);
    let mut header = String::from("q,target,trace");
    for i in 0..l_max {
        for j in i..l_max {
            write!(header, ",cov_{i}_{j}")?;
        }
    }
    header.push('\n');
    let mut text = header;
    for traj in trajectories {
        let l = traj.matrices[0].nrows();
        for (node, m) in traj.matrices.iter().enumerate() {
            let q = traj.grid.state_q(node);
            write!(text, "{},{},{}", q, traj.target, m.trace())?;
            for i in 0..l_max {
                for j in i..l_max {
                    if i < l && j < l {
                        write!(text, ",{}", m[(i, j)])?;
                    } else {
                        text.push(',');
                    }
                }
            }
            text.push('\n');
        }
    }
    atomic_write(path, text.as_bytes())
}

/// `validation.csv`: empirical filter error against the covariance trace.
pub fn write_validation_csv(path: &Path, rows: &[(usize, f64, f64, f64)]) -> Result<()> {
    let mut text = String::from("target,empirical_mse,covariance_mse,relative_deviation\n");
    for (target, emp, cov, dev) in rows {
        writeln!(text, "{target},{emp},{cov},{dev}")?;
    }
    atomic_write(path, text.as_bytes())
}

pub fn save_policy(path: &Path, policy: &Policy1d) -> Result<()> {
    let text = serde_json::to_string_pretty(policy)?;
    atomic_write(path, text.as_bytes())
}

pub fn load_policy(path: &Path) -> Result<Policy1d> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading policy {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}
