use crate::error::{Error, Result};

/// Fixed integration grid over the normalized interval [0, 1].
///
/// The classical RK4 scheme consumes the state at a step start, the
/// coefficients at the step midpoint, and the coefficients at the step end.
/// To avoid interpolating sensing profiles we keep one sample per half step:
/// a grid with `steps` RK4 steps carries `2 * steps + 1` sample nodes, and
/// step `m` reads nodes `2m`, `2m + 1` and `2m + 2`. State trajectories
/// (covariances, sensitivities) live on the step endpoints only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    steps: usize,
}

impl Grid {
    pub fn new(steps: usize) -> Result<Self> {
        if steps < 1 {
            return Err(Error::invalid(format!(
                "integration grid needs at least 1 step, got {steps}"
            )));
        }
        Ok(Grid { steps })
    }

    /// RK4 steps per unit interval.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of sample nodes (step endpoints and midpoints).
    pub fn sample_count(&self) -> usize {
        2 * self.steps + 1
    }

    /// Number of state nodes (step endpoints).
    pub fn state_count(&self) -> usize {
        self.steps + 1
    }

    /// Normalized position of sample node `k`, `k = 0..=2*steps`.
    pub fn sample_q(&self, k: usize) -> f64 {
        k as f64 / (2 * self.steps) as f64
    }

    /// Normalized position of state node `m`, `m = 0..=steps`.
    pub fn state_q(&self, m: usize) -> f64 {
        m as f64 / self.steps as f64
    }

    /// Step width on the normalized interval.
    pub fn h(&self) -> f64 {
        1.0 / self.steps as f64
    }

    /// Trapezoid quadrature of samples given at the state nodes.
    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.state_count(), "grid/value mismatch");
        let h = self.h();
        let mut acc = 0.5 * (values[0] + values[values.len() - 1]);
        for v in &values[1..values.len() - 1] {
            acc += v;
        }
        acc * h
    }
}

impl Default for Grid {
    /// 2000 RK4 steps per period.
    fn default() -> Self {
        Grid { steps: 2000 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_layout() {
        let g = Grid::new(4).unwrap();
        assert_eq!(g.sample_count(), 9);
        assert_eq!(g.state_count(), 5);
        assert_eq!(g.sample_q(0), 0.0);
        assert_eq!(g.sample_q(8), 1.0);
        assert_eq!(g.state_q(2), 0.5);
        assert_eq!(g.h(), 0.25);
    }

    #[test]
    fn rejects_empty_grid() {
        assert!(Grid::new(0).is_err());
    }

    #[test]
    fn trapezoid_linear_exact() {
        let g = Grid::new(10).unwrap();
        let vals: Vec<f64> = (0..=10).map(|m| 2.0 * g.state_q(m) + 1.0).collect();
        assert!((g.trapezoid(&vals) - 2.0).abs() < 1e-14);
    }
}
