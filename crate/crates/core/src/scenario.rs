//! Problem data: targets with linear stochastic internal states, agents with
//! (optionally bounded) speed, and the distance-based sensing model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Tolerance on singular values in the PBH detectability test.
pub const DETECTABILITY_TOL: f64 = 1e-8;

/// One monitored target: internal state dynamics `phi' = A phi + w`,
/// `w ~ N(0, Q)`, observed through `z = gamma(s - x) H phi + v`,
/// `v ~ N(0, R)`.
#[derive(Debug, Clone)]
pub struct TargetSpec {
    pub id: usize,
    /// Fixed position in the workspace, length `P`.
    pub position: DVector<f64>,
    pub a: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// Sensing radius per agent.
    pub radii: Vec<f64>,
    /// Initial covariance for transient runs; identity when absent.
    pub omega0: Option<DMatrix<f64>>,
}

impl TargetSpec {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    /// Information gain `G = H' R^-1 H`.
    pub fn gain(&self) -> DMatrix<f64> {
        let r_inv = self
            .r
            .clone()
            .try_inverse()
            .expect("R validated positive definite");
        self.h.transpose() * r_inv * &self.h
    }

    pub fn initial_covariance(&self) -> DMatrix<f64> {
        self.omega0
            .clone()
            .unwrap_or_else(|| DMatrix::identity(self.state_dim(), self.state_dim()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpeedBound {
    Bounded(f64),
    Unbounded,
}

impl SpeedBound {
    pub fn value(&self) -> Option<f64> {
        match self {
            SpeedBound::Bounded(u) => Some(*u),
            SpeedBound::Unbounded => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentSpec {
    pub id: usize,
    pub u_max: SpeedBound,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Transient { horizon: f64 },
    Steady,
}

impl Mode {
    pub fn is_steady(&self) -> bool {
        matches!(self, Mode::Steady)
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub dim: usize,
    pub targets: Vec<TargetSpec>,
    pub agents: Vec<AgentSpec>,
    /// Control effort weight in the cost.
    pub beta: f64,
    pub mode: Mode,
}

impl Scenario {
    /// Largest sensing radius over all (target, agent) pairs.
    pub fn r_max(&self) -> f64 {
        self.targets
            .iter()
            .flat_map(|t| t.radii.iter().cloned())
            .fold(0.0, f64::max)
    }

    /// Minimum gap between sensing regions: `min_{i != k} |x_i - x_k| - 2 r_max`.
    /// Infinite for a single target.
    pub fn d_min(&self) -> f64 {
        let mut min_dist = f64::INFINITY;
        for i in 0..self.targets.len() {
            for k in (i + 1)..self.targets.len() {
                let d = (&self.targets[i].position - &self.targets[k].position).norm();
                min_dist = min_dist.min(d);
            }
        }
        min_dist - 2.0 * self.r_max()
    }

    /// Every target's sensing region is disjoint from every other's.
    pub fn targets_isolated(&self) -> bool {
        self.d_min() > 0.0
    }

    pub fn horizon(&self) -> Option<f64> {
        match self.mode {
            Mode::Transient { horizon } => Some(horizon),
            Mode::Steady => None,
        }
    }
}

/// Sensing gain as a function of the agent-target displacement: 1 on top of
/// the target, decaying to 0 at the sensing radius, 0 beyond.
pub fn gamma_eval(displacement: &[f64], radius: f64) -> Result<f64> {
    if radius <= 0.0 {
        return Err(Error::invalid(format!(
            "sensing radius must be positive, got {radius}"
        )));
    }
    let dist = norm(displacement);
    if dist >= radius {
        Ok(0.0)
    } else {
        Ok((1.0 - dist / radius).sqrt())
    }
}

/// Gradient of the squared sensing gain `gamma^2 = 1 - |s - x| / r` with
/// respect to the agent position `s`: `-(s - x) / (r |s - x|)` strictly
/// inside the sensing region, zero outside and exactly on the target (the
/// zero vector is a valid subgradient at the norm singularity).
pub fn gamma_sq_gradient(agent: &[f64], target: &[f64], radius: f64) -> Result<Vec<f64>> {
    if radius <= 0.0 {
        return Err(Error::invalid(format!(
            "sensing radius must be positive, got {radius}"
        )));
    }
    assert_eq!(agent.len(), target.len(), "dimension mismatch");
    let diff: Vec<f64> = agent.iter().zip(target).map(|(s, x)| s - x).collect();
    let dist = norm(&diff);
    if dist == 0.0 || dist >= radius {
        return Ok(vec![0.0; agent.len()]);
    }
    Ok(diff.iter().map(|d| -d / (radius * dist)).collect())
}

/// Aggregate signal power for one target: sum of squared sensing gains over
/// all agents.
pub fn eta_eval(scenario: &Scenario, target: usize, positions: &[DVector<f64>]) -> Result<f64> {
    let spec = scenario
        .targets
        .get(target)
        .ok_or_else(|| Error::invalid(format!("target index {target} out of range")))?;
    assert_eq!(positions.len(), scenario.agents.len(), "one position per agent");
    let mut eta = 0.0;
    for (j, s) in positions.iter().enumerate() {
        assert_eq!(s.len(), scenario.dim, "position dimension mismatch");
        let g = gamma_eval(
            (s - &spec.position).as_slice(),
            spec.radii[j],
        )?;
        eta += g * g;
    }
    Ok(eta)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// Scenario file format

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioFile {
    dimension: usize,
    #[serde(default)]
    beta: f64,
    mode: String,
    #[serde(default)]
    horizon: Option<f64>,
    targets: Vec<TargetFile>,
    agents: Vec<AgentFile>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TargetFile {
    position: Vec<f64>,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "Q")]
    q: Vec<Vec<f64>>,
    #[serde(rename = "H")]
    h: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    r: Vec<Vec<f64>>,
    radius: RadiusFile,
    #[serde(default)]
    omega0: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RadiusFile {
    Scalar(f64),
    PerAgent(Vec<f64>),
}

#[derive(Debug, Serialize, Deserialize)]
struct AgentFile {
    u_max: UMaxFile,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum UMaxFile {
    Bounded(f64),
    Keyword(String),
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        Scenario::from_file(file)
    }

    pub fn load(path: &std::path::Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)?;
        Scenario::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = ScenarioFile {
            dimension: self.dim,
            beta: self.beta,
            mode: match self.mode {
                Mode::Steady => "steady".to_string(),
                Mode::Transient { .. } => "transient".to_string(),
            },
            horizon: self.horizon(),
            targets: self
                .targets
                .iter()
                .map(|t| TargetFile {
                    position: t.position.iter().cloned().collect(),
                    a: matrix_rows(&t.a),
                    q: matrix_rows(&t.q),
                    h: matrix_rows(&t.h),
                    r: matrix_rows(&t.r),
                    radius: RadiusFile::PerAgent(t.radii.clone()),
                    omega0: t.omega0.as_ref().map(matrix_rows),
                })
                .collect(),
            agents: self
                .agents
                .iter()
                .map(|a| AgentFile {
                    u_max: match a.u_max {
                        SpeedBound::Bounded(u) => UMaxFile::Bounded(u),
                        SpeedBound::Unbounded => UMaxFile::Keyword("unbounded".to_string()),
                    },
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("scenario serialization")
    }

    fn from_file(file: ScenarioFile) -> Result<Scenario> {
        if !(1..=3).contains(&file.dimension) {
            return Err(Error::scenario(
                "dimension",
                format!("workspace dimension must be 1, 2 or 3, got {}", file.dimension),
            ));
        }
        if file.beta < 0.0 {
            return Err(Error::scenario("beta", "effort weight must be nonnegative"));
        }
        let mode = match file.mode.as_str() {
            "steady" => Mode::Steady,
            "transient" => {
                let horizon = file.horizon.ok_or_else(|| {
                    Error::scenario("horizon", "transient mode requires a horizon")
                })?;
                if horizon <= 0.0 {
                    return Err(Error::scenario("horizon", "horizon must be positive"));
                }
                Mode::Transient { horizon }
            }
            other => {
                return Err(Error::scenario(
                    "mode",
                    format!("expected \"steady\" or \"transient\", got {other:?}"),
                ))
            }
        };
        if file.targets.is_empty() {
            return Err(Error::scenario("targets", "at least one target required"));
        }
        if file.agents.is_empty() {
            return Err(Error::scenario("agents", "at least one agent required"));
        }

        let n_agents = file.agents.len();
        let mut agents = Vec::with_capacity(n_agents);
        for (j, a) in file.agents.iter().enumerate() {
            let u_max = match &a.u_max {
                UMaxFile::Bounded(u) if *u > 0.0 => SpeedBound::Bounded(*u),
                UMaxFile::Bounded(u) => {
                    return Err(Error::scenario(
                        format!("agents[{j}].u_max"),
                        format!("speed bound must be positive, got {u}"),
                    ))
                }
                UMaxFile::Keyword(k) if k == "unbounded" => SpeedBound::Unbounded,
                UMaxFile::Keyword(k) => {
                    return Err(Error::scenario(
                        format!("agents[{j}].u_max"),
                        format!("expected a number or \"unbounded\", got {k:?}"),
                    ))
                }
            };
            agents.push(AgentSpec { id: j, u_max });
        }

        let mut targets = Vec::with_capacity(file.targets.len());
        for (i, t) in file.targets.into_iter().enumerate() {
            targets.push(validate_target(i, t, file.dimension, n_agents)?);
        }

        Ok(Scenario {
            dim: file.dimension,
            targets,
            agents,
            beta: file.beta,
            mode,
        })
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn parse_matrix(field: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::scenario(field, "empty matrix"));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::scenario(field, "ragged or empty matrix rows"));
    }
    let mut m = DMatrix::zeros(rows.len(), ncols);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::scenario(field, format!("non-finite entry at ({i},{j})")));
            }
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

fn validate_target(i: usize, t: TargetFile, dim: usize, n_agents: usize) -> Result<TargetSpec> {
    let f = |name: &str| format!("targets[{i}].{name}");
    if t.position.len() != dim {
        return Err(Error::scenario(
            f("position"),
            format!("expected {dim} coordinates, got {}", t.position.len()),
        ));
    }
    let a = parse_matrix(&f("A"), &t.a)?;
    let l = a.nrows();
    if a.ncols() != l {
        return Err(Error::scenario(f("A"), "state matrix must be square"));
    }
    let q = parse_matrix(&f("Q"), &t.q)?;
    if q.shape() != (l, l) {
        return Err(Error::scenario(f("Q"), format!("expected {l}x{l}")));
    }
    if !linalg::is_spd(&q, 1e-10) {
        return Err(Error::scenario(
            f("Q"),
            "process noise intensity must be symmetric positive definite",
        ));
    }
    let h = parse_matrix(&f("H"), &t.h)?;
    if h.ncols() != l {
        return Err(Error::scenario(f("H"), format!("expected {l} columns")));
    }
    let m = h.nrows();
    let r = parse_matrix(&f("R"), &t.r)?;
    if r.shape() != (m, m) {
        return Err(Error::scenario(f("R"), format!("expected {m}x{m}")));
    }
    if !linalg::is_spd(&r, 1e-10) {
        return Err(Error::scenario(
            f("R"),
            "measurement noise intensity must be symmetric positive definite",
        ));
    }
    if !linalg::is_detectable(&a, &h, DETECTABILITY_TOL) {
        return Err(Error::scenario(
            f("A"),
            "pair (A, H) is not detectable: an unstable mode is unobserved",
        ));
    }
    let radii = match t.radius {
        RadiusFile::Scalar(r) => vec![r; n_agents],
        RadiusFile::PerAgent(v) => {
            if v.len() != n_agents {
                return Err(Error::scenario(
                    f("radius"),
                    format!("expected {n_agents} per-agent radii, got {}", v.len()),
                ));
            }
            v
        }
    };
    if let Some(bad) = radii.iter().find(|r| **r <= 0.0) {
        return Err(Error::scenario(
            f("radius"),
            format!("sensing radii must be positive, got {bad}"),
        ));
    }
    let omega0 = match t.omega0 {
        Some(rows) => {
            let o = parse_matrix(&f("omega0"), &rows)?;
            if o.shape() != (l, l) {
                return Err(Error::scenario(f("omega0"), format!("expected {l}x{l}")));
            }
            if !linalg::is_spd(&o, 1e-10) {
                return Err(Error::scenario(
                    f("omega0"),
                    "initial covariance must be symmetric positive definite",
                ));
            }
            Some(o)
        }
        None => None,
    };
    Ok(TargetSpec {
        id: i,
        position: DVector::from_vec(t.position),
        a,
        q,
        h,
        r,
        radii,
        omega0,
    })
}


#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        /// Gamma stays in [0, 1] and is non-increasing in the distance.
        #[test]
        fn gamma_range_and_monotonicity(d1 in 0.0f64..2.0, d2 in 0.0f64..2.0, r in 0.01f64..2.0) {
            let g1 = gamma_eval(&[d1], r).unwrap();
            let g2 = gamma_eval(&[d2], r).unwrap();
            prop_assert!((0.0..=1.0).contains(&g1));
            if d1 <= d2 {
                prop_assert!(g1 >= g2);
            }
        }

        /// Eta is invariant under permutation of agents with equal radii.
        #[test]
        fn eta_permutation_invariant(p1 in -2.0f64..2.0, p2 in -2.0f64..2.0) {
            let text = r#"{
                "dimension": 1, "beta": 0.0, "mode": "steady",
                "targets": [{"position": [0.0], "A": [[0.0]], "Q": [[1.0]],
                             "H": [[1.0]], "R": [[1.0]], "radius": 0.9}],
                "agents": [{"u_max": 1.0}, {"u_max": 1.0}]
            }"#;
            let s = Scenario::from_json(text).unwrap();
            let a = vec![nalgebra::DVector::from_vec(vec![p1]), nalgebra::DVector::from_vec(vec![p2])];
            let b = vec![nalgebra::DVector::from_vec(vec![p2]), nalgebra::DVector::from_vec(vec![p1])];
            let ea = eta_eval(&s, 0, &a).unwrap();
            let eb = eta_eval(&s, 0, &b).unwrap();
            prop_assert!((ea - eb).abs() < 1e-14);
        }
    }
}
