use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::grid::Domain;
use crate::landscape::{DiffusionField, Landscape};

const H: f64 = 1e-5;

fn probes(domain: &Domain, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| DVector::from_fn(domain.dim(), |i, _| rng.gen_range(domain.lo[i]..domain.hi[i])))
        .collect()
}

fn nudge(x: &DVector<f64>, j: usize, h: f64) -> DVector<f64> {
    let mut y = x.clone();
    y[j] += h;
    y
}

/// Largest `‖fd − analytic‖ / (1 + ‖analytic‖)` over gradient and Hessian
/// at `count` random probes.
pub fn fd_check(landscape: &Landscape, domain: &Domain, count: usize, seed: u64) -> f64 {
    let p = landscape.dim();
    let mut worst: f64 = 0.0;
    for x in probes(domain, count, seed) {
        let g = landscape.gradient(&x);
        let fd_g = DVector::from_fn(p, |j, _| (landscape.value(&nudge(&x, j, H)) - landscape.value(&nudge(&x, j, -H))) / (2.0 * H));
        worst = worst.max((fd_g - &g).norm() / (1.0 + g.norm()));
        let hs = landscape.hessian(&x);
        for j in 0..p {
            let col = (landscape.gradient(&nudge(&x, j, H)) - landscape.gradient(&nudge(&x, j, -H))) / (2.0 * H);
            let an = hs.column(j).into_owned();
            worst = worst.max((col - &an).norm() / (1.0 + an.norm()));
        }
    }
    worst
}

/// Largest normalized error of `∂·D` against central differences of `D`.
pub fn fd_check_field(field: &DiffusionField, domain: &Domain, count: usize, seed: u64) -> Result<f64> {
    let p = domain.dim();
    let mut worst: f64 = 0.0;
    for x in probes(domain, count, seed) {
        let (_, div) = field.eval(&x)?;
        let mut fd = DVector::zeros(p);
        for j in 0..p {
            let dp = field.matrix(&nudge(&x, j, H))?;
            let dm = field.matrix(&nudge(&x, j, -H))?;
            for i in 0..p {
                fd[i] += (dp[(i, j)] - dm[(i, j)]) / (2.0 * H);
            }
        }
        worst = worst.max((fd - &div).norm() / (1.0 + div.norm()));
    }
    Ok(worst)
}
