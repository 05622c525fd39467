//! Effective potential `v` and the zero-current steady state
//! `ρ ∝ exp(−(2/T) v)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Domain, Grid};
use crate::landscape::{CriticalPoints, DiffusionField, Landscape, LossTransform, Provenance};
use crate::linalg;
use crate::quad::adaptive_gl;

/// Curl defect above which a numeric potential is refused.
pub const CURL_TOL: f64 = 1e-4;

/// Relative tolerance of the line-integral quadrature.
pub const LINE_RTOL: f64 = 1e-10;

const CURL_GATE_N: usize = 17;

/// `𝒱(θ) = D⁻¹(∂U + (T/2)∂·D)`.
pub fn effective_drift(landscape: &Landscape, field: &DiffusionField, temperature: f64, theta: &DVector<f64>) -> Result<DVector<f64>> {
    let (d, div) = field.eval(theta)?;
    let rhs = landscape.gradient(theta) + div * (0.5 * temperature);
    linalg::spd_solve(&d, &rhs, theta)
}

#[derive(Debug, Clone, PartialEq)]
enum Form {
    /// `v = U/d`.
    ConstantIsotropic(f64),
    /// `v = f(U) − (T/2) log f'(U)`.
    OfLoss(LossTransform),
    /// `v = Σ f(U_i) − (T/2) Σ log f'(U_i)`.
    Separable(LossTransform, Vec<Landscape>),
    Numeric,
}

impl PartialEq for Landscape {
    fn eq(&self, other: &Self) -> bool {
        self.same_as(other)
    }
}

/// Which construction an effective potential uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialSource {
    ClosedForm,
    NumericLineIntegral,
}

/// Effective potential, normalized so that `v(reference) = 0`.
#[derive(Debug, Clone)]
pub struct EffectivePotential {
    landscape: Landscape,
    field: DiffusionField,
    temperature: f64,
    reference: DVector<f64>,
    form: Form,
    offset: f64,
}

impl EffectivePotential {
    /// Closed form when the (landscape, field) pair belongs to a known family.
    pub fn closed_form(landscape: &Landscape, field: &DiffusionField, temperature: f64, reference: &DVector<f64>) -> Option<Self> {
        let form = if let Some(d) = field.constant_isotropic() {
            if d > 0.0 {
                Form::ConstantIsotropic(d)
            } else {
                return None;
            }
        } else {
            match field {
                DiffusionField::IsotropicOfLoss { transform, base } if base.same_as(landscape) => Form::OfLoss(*transform),
                DiffusionField::DiagonalSeparable { potentials, transform } => match landscape.provenance() {
                    Provenance::Separable(pieces)
                        if pieces.len() == potentials.len() && pieces.iter().zip(potentials).all(|(a, b)| a.same_as(b)) =>
                    {
                        Form::Separable(*transform, potentials.clone())
                    }
                    _ => return None,
                },
                _ => return None,
            }
        };
        let mut out = Self {
            landscape: landscape.clone(),
            field: field.clone(),
            temperature,
            reference: reference.clone(),
            form,
            offset: 0.0,
        };
        out.offset = out.raw_closed(reference).ok()?;
        Some(out)
    }

    pub fn source(&self) -> PotentialSource {
        if self.form == Form::Numeric {
            PotentialSource::NumericLineIntegral
        } else {
            PotentialSource::ClosedForm
        }
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn landscape(&self) -> &Landscape {
        &self.landscape
    }

    pub fn field(&self) -> &DiffusionField {
        &self.field
    }

    pub fn reference(&self) -> &DVector<f64> {
        &self.reference
    }

    pub fn dim(&self) -> usize {
        self.landscape.dim()
    }

    fn raw_closed(&self, theta: &DVector<f64>) -> Result<f64> {
        let t = self.temperature;
        match &self.form {
            Form::ConstantIsotropic(d) => Ok(self.landscape.value(theta) / d),
            Form::OfLoss(f) => {
                let u = self.landscape.value(theta);
                check_positive(u, f, theta)?;
                Ok(f.f(u) - 0.5 * t * f.fprime(u).ln())
            }
            Form::Separable(f, pieces) => {
                let mut v = 0.0;
                for (piece, x) in pieces.iter().zip(theta.iter()) {
                    let u = piece.value1(*x);
                    check_positive(u, f, theta)?;
                    v += f.f(u) - 0.5 * t * f.fprime(u).ln();
                }
                Ok(v)
            }
            Form::Numeric => unreachable!("numeric potential has no closed form"),
        }
    }

    /// `𝒱(θ)`, the gradient of `v`.
    pub fn drift(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.form {
            Form::ConstantIsotropic(d) => Ok(self.landscape.gradient(theta) / *d),
            _ => effective_drift(&self.landscape, &self.field, self.temperature, theta),
        }
    }

    /// `v(θ) − v(reference)`.
    pub fn value(&self, theta: &DVector<f64>) -> Result<f64> {
        match self.form {
            Form::Numeric => self.segment(&self.reference, theta),
            _ => Ok(self.raw_closed(theta)? - self.offset),
        }
    }

    /// Line integral of `𝒱` along the straight segment `a → b`.
    pub fn segment(&self, a: &DVector<f64>, b: &DVector<f64>) -> Result<f64> {
        let dir = b - a;
        if dir.norm() == 0.0 {
            return Ok(0.0);
        }
        adaptive_gl(|t| Ok(self.drift(&(a + &dir * t))?.dot(&dir)), 0.0, 1.0, LINE_RTOL)
    }

    /// Line integral of `𝒱` along a polyline through `points`.
    pub fn path_integral(&self, points: &[DVector<f64>]) -> Result<f64> {
        let mut total = 0.0;
        for w in points.windows(2) {
            total += self.segment(&w[0], &w[1])?;
        }
        Ok(total)
    }

    /// `∂²v`: analytic for constant isotropic `D`, otherwise fourth-order
    /// central differences of `𝒱`.
    pub fn hessian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        if let Form::ConstantIsotropic(d) = self.form {
            return Ok(self.landscape.hessian(theta) / d);
        }
        let p = self.dim();
        let mut h = DMatrix::zeros(p, p);
        for j in 0..p {
            let step = 1e-4 * theta[j].abs().max(1.0);
            let at = |k: f64| -> Result<DVector<f64>> {
                let mut x = theta.clone();
                x[j] += k * step;
                self.drift(&x)
            };
            let col = (at(-2.0)? - at(2.0)? + (at(1.0)? - at(-1.0)?) * 8.0) / (12.0 * step);
            h.set_column(j, &col);
        }
        Ok(linalg::symmetrize(&h))
    }

    /// `v` at every node of `grid`.
    pub fn values_on(&self, grid: &Grid) -> Result<Vec<f64>> {
        if grid.dim() != self.dim() {
            return Err(Error::GridMismatch(format!("grid dim {} vs potential dim {}", grid.dim(), self.dim())));
        }
        if self.form != Form::Numeric {
            return (0..grid.len()).into_par_iter().map(|i| self.value(&grid.point(i))).collect();
        }
        if grid.dim() == 1 {
            let xs = grid.axes[0].nodes();
            let first = self.value(&DVector::from_element(1, xs[0]))?;
            let steps = xs
                .par_windows(2)
                .map(|w| self.segment(&DVector::from_element(1, w[0]), &DVector::from_element(1, w[1])))
                .collect::<Result<Vec<f64>>>()?;
            let mut out = Vec::with_capacity(xs.len());
            out.push(first);
            for s in steps {
                let last = *out.last().unwrap();
                out.push(last + s);
            }
            return Ok(out);
        }
        (0..grid.len()).into_par_iter().map(|i| self.value(&grid.point(i))).collect()
    }
}

fn check_positive(u: f64, f: &LossTransform, theta: &DVector<f64>) -> Result<()> {
    if matches!(f, LossTransform::Linear(_)) || (u > 0.0 && u.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain { theta: theta.as_slice().to_vec(), detail: format!("loss {u} not in domain of {f:?}") })
    }
}

impl CriticalPoints for EffectivePotential {
    fn cp_dim(&self) -> usize {
        self.dim()
    }
    fn cp_value(&self, theta: &DVector<f64>) -> Result<f64> {
        self.value(theta)
    }
    fn cp_gradient(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.drift(theta)
    }
    fn cp_hessian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.hessian(theta)
    }
}

/// Largest `|∂_j𝒱_i − ∂_i𝒱_j|` over a `grid_n`-per-axis grid, by central
/// differences. Zero for `p = 1`.
pub fn curl_defect<F>(drift: F, domain: &Domain, grid_n: usize) -> Result<f64>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>> + Sync,
{
    let p = domain.dim();
    if p < 2 {
        return Ok(0.0);
    }
    let grid = Grid::over(domain, grid_n.max(3) - 1)?;
    let defects = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let x = grid.point(idx);
            let mut jac = DMatrix::zeros(p, p);
            for j in 0..p {
                let h = 1e-5 * x[j].abs().max(1.0);
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let col = (drift(&xp)? - drift(&xm)?) / (2.0 * h);
                jac.set_column(j, &col);
            }
            let mut worst: f64 = 0.0;
            for i in 0..p {
                for j in i + 1..p {
                    worst = worst.max((jac[(i, j)] - jac[(j, i)]).abs());
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(defects.into_iter().fold(0.0, f64::max))
}

/// Numeric effective potential by straight-line quadrature from `reference`.
/// For `p ≥ 2` the curl defect over `domain` must not exceed [`CURL_TOL`].
pub fn effective_potential_numeric(
    landscape: &Landscape,
    field: &DiffusionField,
    temperature: f64,
    reference: &DVector<f64>,
    domain: &Domain,
) -> Result<EffectivePotential> {
    field.validate()?;
    effective_drift(landscape, field, temperature, reference)?;
    if landscape.dim() >= 2 {
        let defect = curl_defect(|x| effective_drift(landscape, field, temperature, x), domain, CURL_GATE_N)?;
        if defect > CURL_TOL {
            return Err(Error::CurlDefect { defect, tolerance: CURL_TOL });
        }
    }
    Ok(EffectivePotential {
        landscape: landscape.clone(),
        field: field.clone(),
        temperature,
        reference: reference.clone(),
        form: Form::Numeric,
        offset: 0.0,
    })
}

/// Closed form when available, numeric otherwise; reference = domain center.
pub fn effective_potential(
    landscape: &Landscape,
    field: &DiffusionField,
    temperature: f64,
    domain: &Domain,
) -> Result<EffectivePotential> {
    field.validate()?;
    let reference = domain.center();
    match EffectivePotential::closed_form(landscape, field, temperature, &reference) {
        Some(v) => Ok(v),
        None => effective_potential_numeric(landscape, field, temperature, &reference, domain),
    }
}

/// Normalized density on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GriddedDensity {
    pub grid: Grid,
    pub values: Vec<f64>,
    /// `log ∫ exp(−(2/T) v)` for the potential the density was built from.
    pub log_z: f64,
    pub temperature: f64,
}

impl GriddedDensity {
    /// Normalizes nonnegative `values` by their trapezoid integral.
    pub fn from_unnormalized(grid: Grid, values: Vec<f64>, temperature: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} values for {} nodes", values.len(), grid.len())));
        }
        let z = grid.integrate(&values);
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::Partition(format!("normalizer {z} is not a positive finite number")));
        }
        let values = values.into_iter().map(|v| v / z).collect();
        Ok(Self { grid, values, log_z: z.ln(), temperature })
    }

    pub fn mass(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    /// Trapezoid expectation of nodal values `f`.
    pub fn expect_values(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.values.len() {
            return Err(Error::GridMismatch(format!("{} values for {} nodes", f.len(), self.values.len())));
        }
        let fr: Vec<f64> = f.iter().zip(&self.values).map(|(a, b)| a * b).collect();
        Ok(self.grid.integrate(&fr))
    }

    pub fn expect<F: Fn(&DVector<f64>) -> f64>(&self, f: F) -> f64 {
        let fv: Vec<f64> = (0..self.grid.len()).map(|i| f(&self.grid.point(i))).collect();
        self.expect_values(&fv).expect("same grid")
    }

    /// Mean and variance of coordinate 0.
    pub fn mean_var_1d(&self) -> (f64, f64) {
        let m = self.expect(|x| x[0]);
        let v = self.expect(|x| (x[0] - m).powi(2));
        (m, v)
    }

    /// Inverse-CDF draw from a 1D density, linear within cells.
    pub fn sample_1d<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let xs = self.grid.axes[0].nodes();
        let mut cdf = Vec::with_capacity(xs.len());
        cdf.push(0.0);
        for i in 1..xs.len() {
            let last = cdf[i - 1];
            cdf.push(last + 0.5 * (self.values[i] + self.values[i - 1]) * (xs[i] - xs[i - 1]));
        }
        let total = *cdf.last().unwrap();
        let u = rng.gen::<f64>() * total;
        let i = cdf.partition_point(|c| *c < u).clamp(1, xs.len() - 1);
        let span = cdf[i] - cdf[i - 1];
        let frac = if span > 0.0 { (u - cdf[i - 1]) / span } else { 0.5 };
        xs[i - 1] + frac * (xs[i] - xs[i - 1])
    }

    /// Writes `theta,rho,v` for a 1D density and its potential values.
    pub fn write_csv<W: std::io::Write>(&self, out: W, v: &[f64]) -> Result<()> {
        if self.grid.dim() != 1 || v.len() != self.values.len() {
            return Err(Error::GridMismatch("density export needs a 1D grid and one potential value per node".into()));
        }
        let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["theta", "rho", "v"]).map_err(io)?;
        for ((x, r), p) in self.grid.axes[0].nodes().iter().zip(&self.values).zip(v) {
            w.write_record([x.to_string(), r.to_string(), p.to_string()]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        Ok(())
    }

    /// Trapezoid L1 distance between densities on the same grid.
    pub fn l1_distance(&self, other: &GriddedDensity) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        let diff: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).collect();
        Ok(self.grid.integrate(&diff))
    }
}

/// `ρ = exp(−(2/T)(v − min v)) / Z` on `grid`.
pub fn steady_density(vpot: &EffectivePotential, grid: &Grid) -> Result<GriddedDensity> {
    let v = vpot.values_on(grid)?;
    density_from_potential(grid, &v, vpot.temperature())
}

/// Steady state from nodal potential values.
pub fn density_from_potential(grid: &Grid, v: &[f64], temperature: f64) -> Result<GriddedDensity> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature {temperature} must be positive")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Partition("potential not finite on grid".into()));
    }
    let vmin = v.iter().copied().fold(f64::INFINITY, f64::min);
    let raw: Vec<f64> = v.iter().map(|x| (-(2.0 / temperature) * (x - vmin)).exp()).collect();
    let mut rho = GriddedDensity::from_unnormalized(grid.clone(), raw, temperature)?;
    rho.log_z -= 2.0 / temperature * vmin;
    Ok(rho)
}

/// Steady state of `(landscape, field, T)` on `grid`, reference at the grid
/// center.
pub fn steady_state_on(landscape: &Landscape, field: &DiffusionField, temperature: f64, grid: &Grid) -> Result<GriddedDensity> {
    let domain = Domain::new(grid.axes.iter().map(|a| a.lo).collect(), grid.axes.iter().map(|a| a.hi).collect())?;
    let vpot = effective_potential(landscape, field, temperature, &domain)?;
    steady_density(&vpot, grid)
}

/// Residuals of the stationary moment identities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityResiduals {
    /// `|E[∂U]|`.
    pub mean_gradient: f64,
    /// `|2E[θ∂U] − T·E[D]|`.
    pub fluctuation_dissipation: f64,
}

/// Checks `E[∂U] = 0` and `2E[θ∂U] = T·E[D]` under a 1D density.
pub fn stationarity_check(
    rho: &GriddedDensity,
    landscape: &Landscape,
    field: &DiffusionField,
    temperature: f64,
) -> Result<StationarityResiduals> {
    if rho.grid.dim() != 1 {
        return Err(Error::InvalidArgument("stationarity check is one-dimensional".into()));
    }
    let xs = rho.grid.axes[0].nodes();
    let g: Vec<f64> = xs.iter().map(|x| landscape.grad1(*x)).collect();
    let d = xs
        .iter()
        .map(|x| Ok(field.matrix(&DVector::from_element(1, *x))?[(0, 0)]))
        .collect::<Result<Vec<f64>>>()?;
    let xg: Vec<f64> = xs.iter().zip(&g).map(|(x, g)| x * g).collect();
    let mean_gradient = rho.expect_values(&g)?.abs();
    let fluctuation_dissipation = (2.0 * rho.expect_values(&xg)? - temperature * rho.expect_values(&d)?).abs();
    Ok(StationarityResiduals { mean_gradient, fluctuation_dissipation })
}
