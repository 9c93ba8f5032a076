//! Bang/dwell canonicalization of 1D control policies.
//!
//! Given any feasible piecewise-constant policy over a horizon, build the
//! alternative policy that keeps every visit start (time and position)
//! unchanged but, between visits, moves at full speed toward the just-visited
//! target, dwells on it, and departs at the last feasible moment. Over
//! isolated targets this never reduces any target's sensed power at any
//! instant, so the resulting estimation cost never increases, and the output
//! uses only controls in {-u_max, 0, +u_max} with a bounded switch count.

use crate::covariance::propagate_covariance;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scenario::{gamma_eval, Scenario, SpeedBound};
use crate::traj1d::{merge_segments, AgentPolicy1d, Policy1d};

#[derive(Debug, Clone, Copy, Default)]
pub struct CanonicalOptions {
    /// Run the construction even when sensing regions overlap. The cost
    /// guarantee only holds for isolated targets.
    pub allow_non_isolated: bool,
}

/// Canonicalize every agent's policy. Errors when targets are not isolated
/// unless the options allow it, or when an agent has no finite speed bound.
pub fn canonicalize_policy_1d(
    policy: &Policy1d,
    scenario: &Scenario,
    opts: CanonicalOptions,
) -> Result<Policy1d> {
    if scenario.dim != 1 {
        return Err(Error::invalid("canonicalization requires a 1D workspace"));
    }
    if !scenario.targets_isolated() && !opts.allow_non_isolated {
        return Err(Error::NotIsolated {
            gap: scenario.d_min(),
        });
    }
    let mut agents = Vec::with_capacity(policy.agents.len());
    for (j, agent) in policy.agents.iter().enumerate() {
        let u = match scenario.agents[j].u_max {
            SpeedBound::Bounded(u) => u,
            SpeedBound::Unbounded => {
                return Err(Error::invalid(format!(
                    "agent {j} has no speed bound; bang/dwell structure is undefined"
                )))
            }
        };
        agent.validate(policy.horizon, u)?;
        agents.push(canonicalize_agent(agent, j, scenario, policy.horizon, u)?);
    }
    Ok(Policy1d {
        horizon: policy.horizon,
        agents,
    })
}

fn canonicalize_agent(
    agent: &AgentPolicy1d,
    agent_idx: usize,
    scenario: &Scenario,
    horizon: f64,
    u: f64,
) -> Result<AgentPolicy1d> {
    let episodes = visit_episodes(agent, agent_idx, scenario, horizon);

    // Anchor chain: start, every visit start, terminal position. The segment
    // between anchors p and p+1 belongs to the target whose visit starts at
    // anchor p (none before the first visit).
    let mut anchor_times = vec![0.0];
    let mut anchor_targets: Vec<Option<usize>> = vec![None];
    for (t, i) in &episodes {
        if *t <= 1e-12 {
            anchor_targets[0] = Some(*i);
        } else {
            anchor_times.push(*t);
            anchor_targets.push(Some(*i));
        }
    }
    anchor_times.push(horizon);

    let mut breakpoints = vec![0.0];
    let mut controls = Vec::new();
    for p in 0..anchor_times.len() - 1 {
        let t_a = anchor_times[p];
        let t_b = anchor_times[p + 1];
        if t_b - t_a <= 1e-12 {
            continue;
        }
        let s_a = agent.position(t_a);
        let s_b = agent.position(t_b);
        let x = anchor_targets[p].map(|i| scenario.targets[i].position[0]);
        for (end, control) in interval_segments(t_a, s_a, t_b, s_b, x, u) {
            let last = *breakpoints.last().unwrap();
            if end > last + 1e-12 {
                breakpoints.push(end);
                controls.push(control);
            }
        }
    }
    if controls.is_empty() {
        breakpoints.push(horizon);
        controls.push(0.0);
    }
    // Snap the final breakpoint onto the horizon.
    *breakpoints.last_mut().unwrap() = horizon;
    let (breakpoints, controls) = merge_segments(breakpoints, controls);

    Ok(AgentPolicy1d {
        s0: agent.s0,
        breakpoints,
        controls,
    })
}

/// Visit-start times of one agent: the ordered (time, target) pairs where the
/// agent first senses a target different from the one of the current visit.
/// Consecutive re-entries into the same target extend the current visit.
pub fn visit_episodes(
    agent: &AgentPolicy1d,
    agent_idx: usize,
    scenario: &Scenario,
    horizon: f64,
) -> Vec<(f64, usize)> {
    let mut entries: Vec<(f64, usize)> = Vec::new();
    for (i, target) in scenario.targets.iter().enumerate() {
        let x = target.position[0];
        let r = target.radii[agent_idx];
        for (t_in, _) in visibility_intervals(agent, x, r, horizon) {
            entries.push((t_in, i));
        }
    }
    entries.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut episodes = Vec::new();
    let mut current: Option<usize> = None;
    for (t, i) in entries {
        if current != Some(i) {
            episodes.push((t, i));
            current = Some(i);
        }
    }
    episodes
}

/// Maximal open intervals where the agent is strictly within distance `r` of
/// position `x`.
fn visibility_intervals(
    agent: &AgentPolicy1d,
    x: f64,
    r: f64,
    horizon: f64,
) -> Vec<(f64, f64)> {
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    let mut s = agent.s0;
    for (k, &control) in agent.controls.iter().enumerate() {
        let t_a = agent.breakpoints[k];
        let t_b = agent.breakpoints[k + 1].min(horizon);
        if t_b <= t_a {
            break;
        }
        let (lo, hi) = segment_inside(s, control, t_a, t_b, x, r);
        if hi > lo {
            match intervals.last_mut() {
                Some(last) if lo <= last.1 + 1e-12 => last.1 = last.1.max(hi),
                _ => intervals.push((lo, hi)),
            }
        }
        s += control * (t_b - t_a);
    }
    intervals
}

/// Sub-interval of `[t_a, t_b]` where the linear motion `s(t) = s_a + v (t - t_a)`
/// satisfies `|s - x| < r`. Returns an empty interval when never inside.
fn segment_inside(s_a: f64, v: f64, t_a: f64, t_b: f64, x: f64, r: f64) -> (f64, f64) {
    if v.abs() < 1e-15 {
        return if (s_a - x).abs() < r {
            (t_a, t_b)
        } else {
            (t_a, t_a)
        };
    }
    // Solve x - r < s_a + v dt < x + r for dt.
    let (mut lo, mut hi) = (
        (x - r - s_a) / v,
        (x + r - s_a) / v,
    );
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    let lo = (t_a + lo.max(0.0)).max(t_a);
    let hi = (t_a + hi.min(t_b - t_a)).min(t_b);
    (lo, hi.max(lo))
}

fn signum_tol(x: f64) -> f64 {
    if x > 1e-12 {
        1.0
    } else if x < -1e-12 {
        -1.0
    } else {
        0.0
    }
}

/// Segments (end time, control) covering `[t_a, t_b]`: head toward the
/// target at full speed, dwell on it, and depart at the last moment that
/// still reaches the rendezvous `(t_b, s_b)`; or, without enough slack, turn
/// around at the computed switch time. Without a target: dwell, then sprint.
fn interval_segments(
    t_a: f64,
    s_a: f64,
    t_b: f64,
    s_b: f64,
    x: Option<f64>,
    u: f64,
) -> Vec<(f64, f64)> {
    let tau = t_b - t_a;
    debug_assert!(
        (s_b - s_a).abs() <= u * tau + 1e-6,
        "rendezvous unreachable: |{s_b} - {s_a}| > {u} * {tau}"
    );
    let mut segs = Vec::new();
    match x {
        None => {
            let t_dep = t_b - (s_b - s_a).abs() / u;
            segs.push((t_dep, 0.0));
            segs.push((t_b, u * signum_tol(s_b - s_a)));
        }
        Some(x) => {
            let t_x = t_a + (x - s_a).abs() / u;
            let t_dep = t_b - (s_b - x).abs() / u;
            if t_x <= t_dep + 1e-12 {
                segs.push((t_x, u * signum_tol(x - s_a)));
                segs.push((t_dep, 0.0));
                segs.push((t_b, u * signum_tol(s_b - x)));
            } else {
                // Not enough time to reach the target center: advance toward
                // it, then turn straight to the rendezvous.
                let d = signum_tol(x - s_a);
                let delta = (d * (s_b - s_a) / u + tau) / 2.0;
                let delta = delta.clamp(0.0, (x - s_a).abs() / u);
                let t_star = t_a + delta;
                let s_star = s_a + d * u * delta;
                segs.push((t_star, d * u));
                segs.push((t_b, u * signum_tol(s_b - s_star)));
            }
        }
    }
    segs.retain(|(end, _)| *end > t_a + 1e-12);
    // Monotone ends (zero-length heads may have been dropped).
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(segs.len());
    for (end, c) in segs {
        if let Some(last) = out.last() {
            if end <= last.0 + 1e-12 {
                continue;
            }
        }
        out.push((end, c));
    }
    out
}

/// Time-averaged estimation cost of a policy over its horizon (the effort
/// term is zero by construction in the bounded-speed 1D setting): propagates
/// each target's covariance under the sensed power profile and integrates
/// the trace.
pub fn policy_cost(scenario: &Scenario, policy: &Policy1d, grid: Grid) -> Result<f64> {
    let horizon = policy.horizon;
    let mut total = 0.0;
    for (i, target) in scenario.targets.iter().enumerate() {
        let eta = policy_eta(scenario, policy, i);
        let eta: Vec<f64> = (0..grid.sample_count())
            .map(|k| eta(grid.sample_q(k) * horizon))
            .collect();
        let traj = propagate_covariance(
            target,
            &eta,
            &target.initial_covariance(),
            horizon,
            grid,
        )?;
        let traces: Vec<f64> = traj.matrices.iter().map(|m| m.trace()).collect();
        total += grid.trapezoid(&traces) * horizon;
    }
    Ok(total / horizon)
}

/// Sensed power of one target as a function of time under a policy.
pub fn policy_eta<'a>(
    scenario: &'a Scenario,
    policy: &'a Policy1d,
    target: usize,
) -> impl Fn(f64) -> f64 + 'a {
    move |t: f64| {
        let spec = &scenario.targets[target];
        let x = spec.position[0];
        policy
            .agents
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let g = gamma_eval(&[a.position(t) - x], spec.radii[j]).expect("positive radius");
                g * g
            })
            .sum()
    }
}
