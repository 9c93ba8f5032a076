//! Discrete-time Lyapunov equation `X = S X S' + Z` for a contraction `S`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Below this state dimension the vectorized Kronecker system is solved
/// directly; above it memory grows as L^4 and the series is used instead.
const KRONECKER_LIMIT: usize = 8;

/// Unique solution of `X = S X S' + Z`. Requires the spectral radius of `S`
/// to be strictly below one; `target` only labels the error.
pub fn solve_discrete_lyapunov(
    target: usize,
    s: &DMatrix<f64>,
    z: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let l = s.nrows();
    if s.ncols() != l || z.shape() != (l, l) {
        return Err(Error::invalid("lyapunov operands must be square and equal-sized"));
    }
    let rho = linalg::spectral_radius(s);
    if !(rho < 1.0 - 1e-9) {
        return Err(Error::ContractionViolated { target, rho });
    }
    let mut x = if l <= KRONECKER_LIMIT {
        // (I - S (x) S) vec(X) = vec(Z), columns stacked.
        let kron = s.kronecker(s);
        let n = l * l;
        let system = DMatrix::identity(n, n) - kron;
        let rhs = DVector::from_column_slice(z.as_slice());
        let sol = system
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::invalid("singular lyapunov system"))?;
        DMatrix::from_column_slice(l, l, sol.as_slice())
    } else {
        dlyap_series(s, z, 20_000)
    };
    linalg::symmetrize(&mut x);
    Ok(x)
}

/// Truncated series `sum_j S^j Z S'^j`, stopping at `max_terms` or when a
/// term falls below machine-level significance.
pub fn dlyap_series(s: &DMatrix<f64>, z: &DMatrix<f64>, max_terms: usize) -> DMatrix<f64> {
    let mut x = z.clone();
    let mut term = z.clone();
    let s_t = s.transpose();
    for _ in 0..max_terms {
        term = s * term * &s_t;
        x += &term;
        if term.norm() <= 1e-17 * x.norm().max(1.0) {
            break;
        }
    }
    x
}
