use std::io::Write;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::landscape::{DiffusionField, Landscape};
use crate::steady_state::GriddedDensity;

pub const DEFAULT_FP_CELLS: usize = 2048;

const NEG_MASS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeScheme {
    /// Forward Euler; `dt` is checked against the positivity bound.
    Explicit,
    /// Backward Euler with a tridiagonal solve; unconditionally positive.
    Implicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpOptions {
    pub scheme: TimeScheme,
    /// Defaults to 0.9 of the explicit bound (explicit) or `t_end / 2000`
    /// (implicit).
    pub dt: Option<f64>,
    /// Number of snapshots after the initial one.
    pub snapshots: usize,
}

impl Default for FpOptions {
    fn default() -> Self {
        Self { scheme: TimeScheme::Explicit, dt: None, snapshots: 10 }
    }
}

impl FpOptions {
    pub fn implicit(dt: f64) -> Self {
        Self { scheme: TimeScheme::Implicit, dt: Some(dt), snapshots: 10 }
    }
}

/// Densities at increasing times on a fixed 1D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTrace {
    pub grid: Grid,
    pub snapshots: Vec<(f64, Vec<f64>)>,
}

impl DensityTrace {
    pub fn final_values(&self) -> &[f64] {
        &self.snapshots.last().expect("at least the initial snapshot").1
    }

    pub fn final_density(&self, temperature: f64) -> Result<GriddedDensity> {
        GriddedDensity::from_unnormalized(self.grid.clone(), self.final_values().to_vec(), temperature)
    }

    pub fn masses(&self) -> Vec<f64> {
        self.snapshots.iter().map(|(_, r)| self.grid.integrate(r)).collect()
    }

    /// Writes `time,theta,rho`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "theta", "rho"]).map_err(io)?;
        let xs = self.grid.axes[0].nodes();
        for (t, rho) in &self.snapshots {
            for (x, r) in xs.iter().zip(rho) {
                w.write_record([t.to_string(), x.to_string(), r.to_string()]).map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        Ok(())
    }
}

/// `w/(eᵂ − 1)`.
fn bernoulli(w: f64) -> f64 {
    if w.abs() < 1e-8 {
        1.0 - 0.5 * w
    } else {
        w / w.exp_m1()
    }
}

/// Interface flux `J_{i+½} = up·ρ_{i+1} − down·ρ_i` for
/// `J = Aρ + Bρ'`, exact when `A/B` is constant across the cell.
fn flux_coefficients(a: f64, b: f64, h: f64) -> (f64, f64) {
    if b <= 1e-300 {
        return (a.max(0.0), (-a).max(0.0));
    }
    let w = h * a / b;
    let s = b / h;
    (s * bernoulli(-w), s * bernoulli(w))
}

struct Operator {
    up: Vec<f64>,
    down: Vec<f64>,
    vol: Vec<f64>,
}

impl Operator {
    fn build(landscape: &Landscape, field: &DiffusionField, temperature: f64, grid: &Grid) -> Result<Self> {
        let axis = &grid.axes[0];
        let h = axis.step();
        let n = axis.len();
        let mut up = Vec::with_capacity(n - 1);
        let mut down = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let x = DVector::from_element(1, axis.lo + (i as f64 + 0.5) * h);
            let (d, div) = field.eval(&x)?;
            let a = landscape.gradient(&x)[0] + 0.5 * temperature * div[0];
            let b = 0.5 * temperature * d[(0, 0)];
            let (u, dn) = flux_coefficients(a, b, h);
            up.push(u);
            down.push(dn);
        }
        let mut vol = vec![h; n];
        vol[0] = 0.5 * h;
        vol[n - 1] = 0.5 * h;
        Ok(Self { up, down, vol })
    }

    fn fluxes(&self, rho: &[f64]) -> Vec<f64> {
        (0..self.up.len()).map(|i| self.up[i] * rho[i + 1] - self.down[i] * rho[i]).collect()
    }

    /// Largest stable explicit step: `dt · (outflow rate) ≤ 1` at every node.
    fn explicit_bound(&self) -> f64 {
        let n = self.vol.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let out_right = if i + 1 < n { self.down[i] } else { 0.0 };
            let out_left = if i > 0 { self.up[i - 1] } else { 0.0 };
            worst = worst.max((out_right + out_left) / self.vol[i]);
        }
        1.0 / worst
    }

    fn explicit_step(&self, rho: &[f64], dt: f64) -> Vec<f64> {
        let j = self.fluxes(rho);
        let n = rho.len();
        (0..n)
            .map(|i| {
                let right = if i + 1 < n { j[i] } else { 0.0 };
                let left = if i > 0 { j[i - 1] } else { 0.0 };
                rho[i] + dt / self.vol[i] * (right - left)
            })
            .collect()
    }

    /// Solves `(I − dt·L) ρ' = ρ` by the Thomas algorithm.
    fn implicit_step(&self, rho: &[f64], dt: f64) -> Vec<f64> {
        let n = rho.len();
        let mut lower = vec![0.0; n];
        let mut diag = vec![1.0; n];
        let mut upper = vec![0.0; n];
        for i in 0..n {
            let c = dt / self.vol[i];
            if i + 1 < n {
                diag[i] += c * self.down[i];
                upper[i] = -c * self.up[i];
            }
            if i > 0 {
                diag[i] += c * self.up[i - 1];
                lower[i] = -c * self.down[i - 1];
            }
        }
        let mut cp = vec![0.0; n];
        let mut dp = vec![0.0; n];
        cp[0] = upper[0] / diag[0];
        dp[0] = rho[0] / diag[0];
        for i in 1..n {
            let m = diag[i] - lower[i] * cp[i - 1];
            cp[i] = upper[i] / m;
            dp[i] = (rho[i] - lower[i] * dp[i - 1]) / m;
        }
        let mut out = vec![0.0; n];
        out[n - 1] = dp[n - 1];
        for i in (0..n - 1).rev() {
            out[i] = dp[i] - cp[i] * out[i + 1];
        }
        out
    }
}

/// Evolves `∂_tρ = ∂_θ[∂U·ρ + (T/2)∂_θ(Dρ)]` with zero flux at both ends.
pub fn fp_evolve_1d(
    landscape: &Landscape,
    field: &DiffusionField,
    temperature: f64,
    grid: &Grid,
    t_end: f64,
    rho0: &[f64],
    opts: &FpOptions,
) -> Result<DensityTrace> {
    if grid.dim() != 1 || landscape.dim() != 1 {
        return Err(Error::InvalidArgument("Fokker-Planck solver is one-dimensional".into()));
    }
    if rho0.len() != grid.len() {
        return Err(Error::GridMismatch(format!("{} initial values for {} nodes", rho0.len(), grid.len())));
    }
    if !(temperature > 0.0) || !(t_end >= 0.0) {
        return Err(Error::InvalidArgument(format!("need T > 0 and t_end >= 0 (T = {temperature}, t_end = {t_end})")));
    }
    let mass0 = grid.integrate(rho0);
    if (mass0 - 1.0).abs() > 1e-8 || rho0.iter().any(|r| *r < 0.0 || !r.is_finite()) {
        return Err(Error::InvalidArgument(format!("initial density must be nonnegative with unit mass (mass {mass0})")));
    }
    field.validate()?;
    let op = Operator::build(landscape, field, temperature, grid)?;
    let bound = op.explicit_bound();
    let dt = match (opts.scheme, opts.dt) {
        (_, Some(dt)) if !(dt > 0.0) => return Err(Error::InvalidArgument(format!("dt = {dt} must be positive"))),
        (TimeScheme::Explicit, Some(dt)) if dt > bound => {
            return Err(Error::Instability(format!(
                "explicit step {dt:e} exceeds the positivity bound {bound:e} (diffusive and drift CFL)"
            )))
        }
        (_, Some(dt)) => dt,
        (TimeScheme::Explicit, None) => 0.9 * bound,
        (TimeScheme::Implicit, None) => (t_end / 2000.0).max(f64::MIN_POSITIVE),
    };
    let steps = (t_end / dt).ceil() as u64;
    let dt = if steps > 0 { t_end / steps as f64 } else { dt };
    let every = (steps / opts.snapshots.max(1) as u64).max(1);
    let mut rho = rho0.to_vec();
    let mut snapshots = vec![(0.0, rho.clone())];
    for k in 1..=steps {
        rho = match opts.scheme {
            TimeScheme::Explicit => op.explicit_step(&rho, dt),
            TimeScheme::Implicit => op.implicit_step(&rho, dt),
        };
        if let Some((i, r)) = rho.iter().enumerate().find(|(_, r)| !r.is_finite() || **r < -NEG_MASS_TOL) {
            return Err(Error::Instability(format!(
                "density {r} at node {i} after step {k} violates nonnegativity (bound -{NEG_MASS_TOL:e})"
            )));
        }
        if k % every == 0 || k == steps {
            snapshots.push((k as f64 * dt, rho.clone()));
        }
    }
    Ok(DensityTrace { grid: grid.clone(), snapshots })
}

fn derivative(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|i| {
            if i >= 2 && i + 2 < n {
                (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * h)
            } else if i == 0 {
                (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
            } else if i == n - 1 {
                (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h)
            } else {
                (f[i + 1] - f[i - 1]) / (2.0 * h)
            }
        })
        .collect()
}

/// `J = ∂U·ρ + (T/2)∂_θ(Dρ)` at every node, fourth-order in the interior.
pub fn probability_current(
    rho: &GriddedDensity,
    landscape: &Landscape,
    field: &DiffusionField,
    temperature: f64,
) -> Result<Vec<f64>> {
    if rho.grid.dim() != 1 || rho.grid.len() < 5 {
        return Err(Error::InvalidArgument("probability current needs a 1D grid with at least 5 nodes".into()));
    }
    let axis = &rho.grid.axes[0];
    let xs = axis.nodes();
    let mut drift = Vec::with_capacity(xs.len());
    let mut d_rho = Vec::with_capacity(xs.len());
    for (x, r) in xs.iter().zip(&rho.values) {
        let t = DVector::from_element(1, *x);
        drift.push(landscape.gradient(&t)[0] * r);
        d_rho.push(field.matrix(&t)?[(0, 0)] * r);
    }
    let dd = derivative(&d_rho, axis.step());
    Ok(drift.iter().zip(&dd).map(|(a, b)| a + 0.5 * temperature * b).collect())
}
