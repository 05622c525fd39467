//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues below this are treated as zero when taking square roots.
pub const EIG_CLIP: f64 = 1e-12;

/// Condition-number limit for inverting a diffusion matrix.
pub const COND_LIMIT: f64 = 1e12;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric PSD square root L with L Lᵀ = M, eigenvalues clipped at zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 1 {
        let d = m[(0, 0)];
        return DMatrix::from_element(1, 1, if d > EIG_CLIP { d.sqrt() } else { 0.0 });
    }
    if is_diagonal(m) {
        return DMatrix::from_fn(n, n, |i, j| {
            let d = m[(i, i)];
            if i == j && d > EIG_CLIP {
                d.sqrt()
            } else {
                0.0
            }
        });
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let roots = eig.eigenvalues.map(|l| if l > EIG_CLIP { l.sqrt() } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

pub fn is_diagonal(m: &DMatrix<f64>) -> bool {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j && m[(i, j)] != 0.0 {
                return false;
            }
        }
    }
    true
}

/// Extreme eigenvalues of a symmetric matrix.
pub fn eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 1 {
        return (m[(0, 0)], m[(0, 0)]);
    }
    let ev = SymmetricEigen::new(symmetrize(m)).eigenvalues;
    (ev.min(), ev.max())
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eig_range(m).0
}

/// Solve `D x = b` for symmetric positive definite `D`, refusing
/// near-singular matrices.
pub fn spd_solve(d: &DMatrix<f64>, b: &DVector<f64>, theta: &DVector<f64>) -> Result<DVector<f64>> {
    let n = d.nrows();
    if n == 1 {
        let v = d[(0, 0)];
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::SingularDiffusion { theta: theta.as_slice().to_vec(), condition: f64::INFINITY });
        }
        return Ok(b / v);
    }
    let eig = SymmetricEigen::new(symmetrize(d));
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    if !(lo > 0.0) || hi / lo > COND_LIMIT {
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        return Err(Error::SingularDiffusion { theta: theta.as_slice().to_vec(), condition });
    }
    let coef = eig.eigenvectors.transpose() * b;
    let scaled = coef.zip_map(&eig.eigenvalues, |c, l| c / l);
    Ok(&eig.eigenvectors * scaled)
}

/// Inverse of a symmetric positive definite matrix via eigendecomposition.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let lo = eig.eigenvalues.min();
    if !(lo > 0.0) {
        return Err(Error::NotPositiveDefinite { what: what.to_string(), min_eig: lo });
    }
    let inv = eig.eigenvalues.map(|l| 1.0 / l);
    Ok(symmetrize(&(&eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose())))
}

/// log-determinant of a symmetric positive definite matrix.
pub fn spd_logdet(m: &DMatrix<f64>, what: &str) -> Result<f64> {
    let ev = SymmetricEigen::new(symmetrize(m)).eigenvalues;
    let lo = ev.min();
    if !(lo > 0.0) {
        return Err(Error::NotPositiveDefinite { what: what.to_string(), min_eig: lo });
    }
    Ok(ev.iter().map(|l| l.ln()).sum())
}

pub fn quad_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(m * x))
}

/// Orthonormal basis of the span of `vectors` (modified Gram-Schmidt with
/// re-orthogonalization); vectors whose residual norm falls below `tol`
/// relative to the largest input norm are dropped.
pub fn orthonormal_basis(vectors: &[DVector<f64>], tol: f64) -> Vec<DVector<f64>> {
    let scale = vectors.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    if scale == 0.0 {
        return basis;
    }
    for v in vectors {
        let mut r = v.clone();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&r);
                r -= q * c;
            }
        }
        let n = r.norm();
        if n > tol * scale {
            basis.push(r / n);
        }
    }
    basis
}
