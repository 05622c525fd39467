use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::Landscape;
use crate::error::{Error, Result};
use crate::grid::Domain;
use crate::linalg;

/// Default grid points per axis for the minima scan.
pub const DEFAULT_GRID_N: usize = 4096;

/// Gradient norm accepted at a polished minimum.
pub const GRAD_TOL: f64 = 1e-10;

const DEDUP_TOL: f64 = 1e-6;

/// Anything with a value, gradient and Hessian that may fail to evaluate.
pub trait CriticalPoints {
    fn cp_dim(&self) -> usize;
    fn cp_value(&self, theta: &DVector<f64>) -> Result<f64>;
    fn cp_gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>>;
    fn cp_hessian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>>;
}

impl CriticalPoints for Landscape {
    fn cp_dim(&self) -> usize {
        self.dim()
    }
    fn cp_value(&self, theta: &DVector<f64>) -> Result<f64> {
        Ok(self.value(theta))
    }
    fn cp_gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.gradient(theta))
    }
    fn cp_hessian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.hessian(theta))
    }
}

/// A strict local minimum with its value and Hessian.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub theta: DVector<f64>,
    pub value: f64,
    pub hessian: DMatrix<f64>,
}

/// Strict local minima inside `domain`, sorted by coordinates.
///
/// Candidates come from a uniform scan with `grid_n` points per axis
/// (gradient sign changes in 1D, discrete value minima in 2D) and are
/// polished by damped Newton. Candidates that fail to converge are
/// dropped with a warning.
pub fn local_minima<F: CriticalPoints + ?Sized>(f: &F, domain: &Domain, grid_n: usize) -> Result<Vec<Minimum>> {
    let p = f.cp_dim();
    if domain.dim() != p {
        return Err(Error::InvalidArgument(format!("domain dimension {} != {p}", domain.dim())));
    }
    if grid_n < 3 {
        return Err(Error::InvalidArgument(format!("grid_n = {grid_n} < 3")));
    }
    let found = match p {
        1 => scan_1d(f, domain, grid_n)?,
        2 => scan_2d(f, domain, grid_n)?,
        _ => return Err(Error::InvalidArgument("grid minima search supports p <= 2".into())),
    };
    let mut mins: Vec<Minimum> = Vec::new();
    for m in found {
        if !domain.contains(&m.theta) {
            continue;
        }
        if mins.iter().any(|q| (&q.theta - &m.theta).norm() < DEDUP_TOL) {
            continue;
        }
        mins.push(m);
    }
    mins.sort_by(|a, b| {
        a.theta.iter().zip(b.theta.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(mins)
}

fn finish<F: CriticalPoints + ?Sized>(f: &F, theta: DVector<f64>) -> Result<Option<Minimum>> {
    let hessian = linalg::symmetrize(&f.cp_hessian(&theta)?);
    if !(linalg::min_eigenvalue(&hessian) > 0.0) {
        return Ok(None);
    }
    let value = f.cp_value(&theta)?;
    Ok(Some(Minimum { theta, value, hessian }))
}

fn scan_1d<F: CriticalPoints + ?Sized>(f: &F, domain: &Domain, n: usize) -> Result<Vec<Minimum>> {
    let (lo, hi) = (domain.lo[0], domain.hi[0]);
    let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let gs = xs.iter().map(|x| Ok(f.cp_gradient(&DVector::from_element(1, *x))?[0])).collect::<Result<Vec<f64>>>()?;
    let mut out = Vec::new();
    for i in 0..n - 1 {
        if gs[i] < 0.0 && gs[i + 1] >= 0.0 {
            match bracketed_newton(f, xs[i], xs[i + 1])? {
                Some(x) => {
                    if let Some(m) = finish(f, DVector::from_element(1, x))? {
                        out.push(m);
                    }
                }
                None => log::warn!("minimum candidate in [{}, {}] did not converge; dropped", xs[i], xs[i + 1]),
            }
        }
    }
    Ok(out)
}

/// Newton iteration safeguarded by the bracket `g(a) < 0 <= g(b)`.
fn bracketed_newton<F: CriticalPoints + ?Sized>(f: &F, mut a: f64, mut b: f64) -> Result<Option<f64>> {
    let grad = |x: f64| -> Result<f64> { Ok(f.cp_gradient(&DVector::from_element(1, x))?[0]) };
    let hess = |x: f64| -> Result<f64> { Ok(f.cp_hessian(&DVector::from_element(1, x))?[(0, 0)]) };
    let gb = grad(b)?;
    if gb.abs() <= GRAD_TOL {
        return Ok(Some(b));
    }
    let mut x = 0.5 * (a + b);
    for _ in 0..200 {
        let g = grad(x)?;
        if g.abs() <= GRAD_TOL {
            return Ok(Some(x));
        }
        if g < 0.0 {
            a = x;
        } else {
            b = x;
        }
        let h = hess(x)?;
        let newton = x - g / h;
        let next = if h > 0.0 && newton > a && newton < b { newton } else { 0.5 * (a + b) };
        if next == x || b - a <= 2.0 * f64::EPSILON * x.abs().max(1.0) {
            let g = grad(next)?;
            return Ok(if g.abs() <= GRAD_TOL { Some(next) } else { None });
        }
        x = next;
    }
    Ok(None)
}

fn scan_2d<F: CriticalPoints + ?Sized>(f: &F, domain: &Domain, n: usize) -> Result<Vec<Minimum>> {
    let coord = |d: usize, i: usize| domain.lo[d] + (domain.hi[d] - domain.lo[d]) * i as f64 / (n - 1) as f64;
    let mut vals = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            vals[i * n + j] = f.cp_value(&DVector::from_vec(vec![coord(0, i), coord(1, j)]))?;
        }
    }
    let mut out = Vec::new();
    for i in 1..n - 1 {
        for j in 1..n - 1 {
            let v = vals[i * n + j];
            let mut is_min = true;
            for di in [-1i64, 0, 1] {
                for dj in [-1i64, 0, 1] {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let w = vals[(i as i64 + di) as usize * n + (j as i64 + dj) as usize];
                    if w < v {
                        is_min = false;
                    }
                }
            }
            if is_min {
                let start = DVector::from_vec(vec![coord(0, i), coord(1, j)]);
                match polish_minimum(f, &start) {
                    Ok(m) => out.push(m),
                    Err(e) => log::warn!("minimum candidate near {:?} dropped: {e}", start.as_slice()),
                }
            }
        }
    }
    Ok(out)
}

/// Damped Newton polish from `start` to `‖∂U‖ ≤ GRAD_TOL`.
pub fn polish_minimum<F: CriticalPoints + ?Sized>(f: &F, start: &DVector<f64>) -> Result<Minimum> {
    let mut x = start.clone();
    let mut g = f.cp_gradient(&x)?;
    for _ in 0..200 {
        let gn = g.norm();
        if gn <= GRAD_TOL {
            return finish(f, x.clone())?.ok_or_else(|| Error::NotPositiveDefinite {
                what: format!("Hessian at critical point {:?}", x.as_slice()),
                min_eig: f64::NAN,
            });
        }
        let h = linalg::symmetrize(&f.cp_hessian(&x)?);
        let eig = SymmetricEigen::new(h);
        let lmin = eig.eigenvalues.min();
        let scale = eig.eigenvalues.amax().max(1e-300);
        let shift = if lmin > 1e-12 * scale { 0.0 } else { lmin.abs() + 1e-6 * scale };
        let coef = eig.eigenvectors.transpose() * &g;
        let step = -(&eig.eigenvectors * coef.zip_map(&eig.eigenvalues, |c, l| c / (l + shift)));
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let xn = &x + &step * t;
            let gnew = f.cp_gradient(&xn)?;
            if gnew.norm() < gn {
                x = xn;
                g = gnew;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(Error::Instability(format!(
        "Newton polish from {:?} stalled with gradient norm {:e}",
        start.as_slice(),
        g.norm()
    )))
}
