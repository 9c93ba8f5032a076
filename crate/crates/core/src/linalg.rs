use nalgebra::{DMatrix, DVector};

/// In-place scaled accumulation over matrices, `y += a * x`.
pub fn mat_axpy(y: &mut DMatrix<f64>, a: f64, x: &DMatrix<f64>) {
    debug_assert_eq!(y.shape(), x.shape());
    for (yv, xv) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *yv += a * xv;
    }
}

/// In-place symmetrization, `m <- (m + m') / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Largest absolute off-diagonal asymmetry `max |m_ij - m_ji|`.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    let mut s = m.clone();
    symmetrize(&mut s);
    let mut ev = s.symmetric_eigenvalues();
    ev.as_mut_slice()
        .sort_by(|a, b| a.partial_cmp(b).expect("NaN eigenvalue"));
    ev
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(m)[0]
}

/// Largest eigenvalue of the symmetric part of `m`.
pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let ev = symmetric_eigenvalues(m);
    ev[ev.len() - 1]
}

/// True when the symmetric part of `m` has no eigenvalue below `-tol`.
pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> bool {
    min_eigenvalue(m) >= -tol
}

/// True when the matrix is symmetric within `tol` and positive definite.
pub fn is_spd(m: &DMatrix<f64>, tol: f64) -> bool {
    asymmetry(m) <= tol && min_eigenvalue(m) > tol
}

/// Spectral radius of a (generally non-symmetric) square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max)
}

/// Lower Cholesky factor of an SPD matrix; falls back to an eigenvalue
/// square root for matrices that are only semidefinite at roundoff level.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(chol) = m.clone().cholesky() {
        return chol.l();
    }
    let mut s = m.clone();
    symmetrize(&mut s);
    let eig = s.symmetric_eigen();
    let n = m.nrows();
    let mut root = DMatrix::zeros(n, n);
    for k in 0..n {
        let lam = eig.eigenvalues[k].max(0.0).sqrt();
        for i in 0..n {
            root[(i, k)] = eig.eigenvectors[(i, k)] * lam;
        }
    }
    root
}

/// PBH detectability test for the pair `(a, h)`: for every eigenvalue
/// `lambda` of `a` with nonnegative real part, the stacked matrix
/// `[a - lambda I; h]` must have full column rank. Complex eigenvalues are
/// handled through the real embedding `[re, -im; im, re]`, whose singular
/// values duplicate the complex ones.
pub fn is_detectable(a: &DMatrix<f64>, h: &DMatrix<f64>, tol: f64) -> bool {
    let l = a.nrows();
    let m = h.nrows();
    for lambda in a.complex_eigenvalues().iter() {
        if lambda.re < 0.0 {
            continue;
        }
        let rows = l + m;
        let mut re = DMatrix::zeros(rows, l);
        let mut im = DMatrix::zeros(rows, l);
        for i in 0..l {
            for j in 0..l {
                re[(i, j)] = a[(i, j)];
            }
            re[(i, i)] -= lambda.re;
            im[(i, i)] = -lambda.im;
        }
        for i in 0..m {
            for j in 0..l {
                re[(l + i, j)] = h[(i, j)];
            }
        }
        let mut emb = DMatrix::zeros(2 * rows, 2 * l);
        emb.view_mut((0, 0), (rows, l)).copy_from(&re);
        emb.view_mut((0, l), (rows, l)).copy_from(&(-&im));
        emb.view_mut((rows, 0), (rows, l)).copy_from(&im);
        emb.view_mut((rows, l), (rows, l)).copy_from(&re);
        let sv = emb.singular_values();
        let min_sv = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_sv <= tol {
            return false;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn symmetrize_and_asymmetry() {
        let mut m = dmatrix![1.0, 2.0; 4.0, 3.0];
        assert!((asymmetry(&m) - 2.0).abs() < 1e-15);
        symmetrize(&mut m);
        assert_eq!(m[(0, 1)], 3.0);
        assert_eq!(m[(1, 0)], 3.0);
    }

    #[test]
    fn spectral_radius_rotation() {
        // 90-degree rotation scaled by 0.5: complex eigenvalues of norm 0.5.
        let m = dmatrix![0.0, -0.5; 0.5, 0.0];
        assert!((spectral_radius(&m) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn detectability_identity_observer() {
        let a = dmatrix![0.5, 0.0; 0.0, -1.0];
        let h = DMatrix::identity(2, 2);
        assert!(is_detectable(&a, &h, 1e-8));
    }

    #[test]
    fn undetectable_unstable_mode() {
        // Unstable second state never observed.
        let a = dmatrix![-1.0, 0.0; 0.0, 0.5];
        let h = dmatrix![1.0, 0.0];
        assert!(!is_detectable(&a, &h, 1e-8));
        // A stable hidden mode is fine.
        let a = dmatrix![-1.0, 0.0; 0.0, -0.5];
        assert!(is_detectable(&a, &h, 1e-8));
    }

    #[test]
    fn detectability_complex_pair() {
        // Undamped oscillator (eigenvalues +-i), observed through one state:
        // detectable because the mode mixes both states.
        let a = dmatrix![0.0, 1.0; -1.0, 0.0];
        let h = dmatrix![1.0, 0.0];
        assert!(is_detectable(&a, &h, 1e-8));
    }

    #[test]
    fn psd_sqrt_roundtrip() {
        let m = dmatrix![2.0, 0.5; 0.5, 1.0];
        let l = psd_sqrt(&m);
        let back = &l * l.transpose();
        assert!((&back - &m).norm() < 1e-12);
    }
}
