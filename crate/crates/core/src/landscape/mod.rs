//! Synthetic loss landscapes, shifted train/test pairs and diffusion fields.
//!
//! The bump family is the negative log of a weighted Gaussian mixture plus
//! a quadratic confinement:
//!
//! `U(θ) = lscale·[ −log Σ_i w_i N(θ; m_i, σ_i² I) + (c/2)‖θ‖² ]`
//!
//! so basin `i` has depth `−log(w_i (2πσ_i²)^{-p/2})` and curvature
//! `1/σ_i²` near its center.

mod diffusion;
mod minima;

pub use diffusion::{eval_diffusion, DiffusionField, LossTransform};
pub use minima::{local_minima, polish_minimum, CriticalPoints, Minimum, DEFAULT_GRID_N, GRAD_TOL};

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// A smooth scalar objective with analytic derivatives.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, theta: &DVector<f64>) -> f64;
    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64>;
}

/// Parameters of the synthetic bump family.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpSpec {
    pub minima: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub confinement: f64,
    pub loss_scale: f64,
    pub weight_perturb: f64,
    pub seed: u64,
}

impl BumpSpec {
    /// 1D spec with `lscale = 1`, `wscale = 0`, seed 0.
    pub fn one_d(minima: &[f64], weights: &[f64], sigmas: &[f64], confinement: f64) -> Self {
        Self {
            minima: minima.iter().map(|m| vec![*m]).collect(),
            weights: weights.to_vec(),
            sigmas: sigmas.to_vec(),
            confinement,
            loss_scale: 1.0,
            weight_perturb: 0.0,
            seed: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.minima.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.minima.len();
        if n == 0 {
            return Err(Error::Config("bump spec needs at least one minimum".into()));
        }
        if self.weights.len() != n || self.sigmas.len() != n {
            return Err(Error::Config(format!(
                "minima/weights/sigmas lengths differ: {}/{}/{}",
                n,
                self.weights.len(),
                self.sigmas.len()
            )));
        }
        let p = self.dim();
        if p == 0 || self.minima.iter().any(|m| m.len() != p) {
            return Err(Error::Config("all minima must share one nonzero dimension".into()));
        }
        if self.sigmas.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("sigmas must be positive".into()));
        }
        if self.weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Config("weights must be positive".into()));
        }
        if !(self.confinement >= 0.0) {
            return Err(Error::Config("confinement c must be nonnegative".into()));
        }
        if !self.loss_scale.is_finite() || self.loss_scale == 0.0 {
            return Err(Error::Config("lscale must be finite and nonzero".into()));
        }
        Ok(())
    }

    /// Weights after the seeded additive perturbation `wscale·N(0,1)`.
    pub fn effective_weights(&self) -> Result<Vec<f64>> {
        if self.weight_perturb == 0.0 {
            return Ok(self.weights.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let out: Vec<f64> = self
            .weights
            .iter()
            .map(|w| {
                let z: f64 = StandardNormal.sample(&mut rng);
                w + self.weight_perturb * z
            })
            .collect();
        if out.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Config(format!("wscale perturbation produced nonpositive weights {out:?}")));
        }
        Ok(out)
    }
}

/// Where a landscape came from.
#[derive(Clone, Debug)]
pub enum Provenance {
    Bumps(BumpSpec),
    Quadratic,
    Shifted(Vec<f64>),
    Separable(Vec<Landscape>),
    Regularized(f64),
    Pushforward(String),
    LeastSquares,
    Custom(String),
}

/// Cheaply clonable handle to an objective plus its provenance tag.
#[derive(Clone)]
pub struct Landscape {
    obj: Arc<dyn Objective>,
    provenance: Provenance,
}

impl fmt::Debug for Landscape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Landscape").field("dim", &self.dim()).field("provenance", &self.provenance).finish()
    }
}

impl Landscape {
    pub fn from_objective(obj: Arc<dyn Objective>, provenance: Provenance) -> Self {
        Self { obj, provenance }
    }

    pub fn dim(&self) -> usize {
        self.obj.dim()
    }

    pub fn value(&self, theta: &DVector<f64>) -> f64 {
        self.obj.value(theta)
    }

    pub fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.obj.gradient(theta)
    }

    pub fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        self.obj.hessian(theta)
    }

    pub fn value1(&self, x: f64) -> f64 {
        self.value(&DVector::from_element(1, x))
    }

    pub fn grad1(&self, x: f64) -> f64 {
        self.gradient(&DVector::from_element(1, x))[0]
    }

    pub fn hess1(&self, x: f64) -> f64 {
        self.hessian(&DVector::from_element(1, x))[(0, 0)]
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// True when both handles share the same underlying objective.
    pub fn same_as(&self, other: &Landscape) -> bool {
        Arc::ptr_eq(&self.obj, &other.obj)
    }

    /// `U(θ) = offset + ½(θ−center)ᵀH(θ−center)`.
    pub fn quadratic(center: DVector<f64>, hessian: DMatrix<f64>, offset: f64) -> Result<Self> {
        if hessian.nrows() != center.len() || hessian.ncols() != center.len() {
            return Err(Error::Config("quadratic Hessian shape does not match center".into()));
        }
        let hessian = crate::linalg::symmetrize(&hessian);
        Ok(Self::from_objective(Arc::new(Quadratic { center, hessian, offset }), Provenance::Quadratic))
    }

    /// 1D quadratic `offset + ½c(θ−center)²`.
    pub fn quadratic_1d(center: f64, curvature: f64, offset: f64) -> Self {
        Self::quadratic(DVector::from_element(1, center), DMatrix::from_element(1, 1, curvature), offset)
            .expect("1x1 quadratic")
    }

    /// `θ ↦ U(θ + s)`.
    pub fn shifted(&self, s: &DVector<f64>) -> Result<Self> {
        if s.len() != self.dim() {
            return Err(Error::Config(format!("shift dimension {} != landscape dimension {}", s.len(), self.dim())));
        }
        Ok(Self::from_objective(
            Arc::new(Shifted { base: self.clone(), shift: s.clone() }),
            Provenance::Shifted(s.as_slice().to_vec()),
        ))
    }

    /// `U(θ) + (α/2)‖θ‖²`.
    pub fn regularized(&self, alpha: f64) -> Self {
        Self::from_objective(Arc::new(Regularized { base: self.clone(), alpha }), Provenance::Regularized(alpha))
    }

    /// `U(θ) = Σ_i U_i(θ_i)` from one-dimensional pieces.
    pub fn separable(pieces: Vec<Landscape>) -> Result<Self> {
        if pieces.is_empty() || pieces.iter().any(|p| p.dim() != 1) {
            return Err(Error::Config("separable landscapes need 1D pieces".into()));
        }
        Ok(Self::from_objective(Arc::new(Separable { pieces: pieces.clone() }), Provenance::Separable(pieces)))
    }

    /// Landscape from closures.
    pub fn custom<V, G, H>(dim: usize, name: &str, value: V, gradient: G, hessian: H) -> Self
    where
        V: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        H: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self::from_objective(
            Arc::new(Closures { dim, value: Box::new(value), gradient: Box::new(gradient), hessian: Box::new(hessian) }),
            Provenance::Custom(name.to_string()),
        )
    }

    /// 1D landscape from scalar closures.
    pub fn custom_1d<V, G, H>(name: &str, value: V, gradient: G, hessian: H) -> Self
    where
        V: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        H: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::custom(
            1,
            name,
            move |t| value(t[0]),
            move |t| DVector::from_element(1, gradient(t[0])),
            move |t| DMatrix::from_element(1, 1, hessian(t[0])),
        )
    }

    /// Mean squared-error least squares `(1/N) Σ ½(a_iᵀθ − y_i)² + (α/2)‖θ‖²`.
    pub fn least_squares(design: DMatrix<f64>, targets: DVector<f64>, alpha: f64) -> Result<Self> {
        if design.nrows() != targets.len() || design.nrows() == 0 {
            return Err(Error::Config("least-squares design/target shapes differ".into()));
        }
        Ok(Self::from_objective(Arc::new(LeastSquares { design, targets, alpha }), Provenance::LeastSquares))
    }
}

/// Builds the bump landscape described by `spec`.
pub fn build_landscape(spec: &BumpSpec) -> Result<Landscape> {
    spec.validate()?;
    let weights = spec.effective_weights()?;
    let p = spec.dim() as f64;
    let two_pi = 2.0 * std::f64::consts::PI;
    let bumps = spec
        .minima
        .iter()
        .zip(&weights)
        .zip(&spec.sigmas)
        .map(|((m, w), s)| Bump {
            center: DVector::from_column_slice(m),
            log_coef: w.ln() - 0.5 * p * (two_pi * s * s).ln(),
            inv_var: 1.0 / (s * s),
        })
        .collect();
    let obj = BumpMixture { dim: spec.dim(), bumps, confinement: spec.confinement, scale: spec.loss_scale };
    Ok(Landscape::from_objective(Arc::new(obj), Provenance::Bumps(spec.clone())))
}

/// Train landscape and its test counterpart.
#[derive(Clone, Debug)]
pub struct TrainTestPair {
    pub train: Landscape,
    pub test: Landscape,
    /// Constant shift with `test(θ) = train(θ + s)`, when built that way.
    pub shift: Option<DVector<f64>>,
}

impl TrainTestPair {
    pub fn new(train: Landscape, test: Landscape) -> Result<Self> {
        if train.dim() != test.dim() {
            return Err(Error::Config("train and test dimensions differ".into()));
        }
        Ok(Self { train, test, shift: None })
    }

    pub fn from_train(train: Landscape, s: &DVector<f64>) -> Result<Self> {
        let test = train.shifted(s)?;
        Ok(Self { train, test, shift: Some(s.clone()) })
    }

    pub fn dim(&self) -> usize {
        self.train.dim()
    }
}

/// Train landscape from `spec` and test landscape `θ ↦ U^tr(θ + s)`.
pub fn make_shifted_pair(spec: &BumpSpec, s: &DVector<f64>) -> Result<TrainTestPair> {
    let train = build_landscape(spec)?;
    TrainTestPair::from_train(train, s)
}

/// Seeded shift with i.i.d. `N(0, stddev²)` coordinates.
pub fn sample_shift(dim: usize, stddev: f64, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(dim, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        stddev * z
    })
}

struct Bump {
    center: DVector<f64>,
    log_coef: f64,
    inv_var: f64,
}

struct BumpMixture {
    dim: usize,
    bumps: Vec<Bump>,
    confinement: f64,
    scale: f64,
}

impl BumpMixture {
    /// Log mixture terms and the log-sum-exp.
    fn log_terms(&self, theta: &DVector<f64>) -> (Vec<f64>, f64) {
        let a: Vec<f64> = self
            .bumps
            .iter()
            .map(|b| b.log_coef - 0.5 * b.inv_var * (theta - &b.center).norm_squared())
            .collect();
        let amax = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = amax + a.iter().map(|x| (x - amax).exp()).sum::<f64>().ln();
        (a, lse)
    }

    fn responsibilities(&self, theta: &DVector<f64>) -> Vec<f64> {
        let (a, lse) = self.log_terms(theta);
        a.iter().map(|x| (x - lse).exp()).collect()
    }
}

impl Objective for BumpMixture {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        let (_, lse) = self.log_terms(theta);
        self.scale * (-lse + 0.5 * self.confinement * theta.norm_squared())
    }

    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let pi = self.responsibilities(theta);
        let mut g = theta * self.confinement;
        for (b, w) in self.bumps.iter().zip(&pi) {
            g += (theta - &b.center) * (w * b.inv_var);
        }
        g * self.scale
    }

    fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let p = self.dim;
        let pi = self.responsibilities(theta);
        let mut h = DMatrix::identity(p, p) * self.confinement;
        let mut gbar = DVector::zeros(p);
        for (b, w) in self.bumps.iter().zip(&pi) {
            let g = (theta - &b.center) * b.inv_var;
            for i in 0..p {
                h[(i, i)] += w * b.inv_var;
            }
            h -= &g * g.transpose() * *w;
            gbar += g * *w;
        }
        h += &gbar * gbar.transpose();
        crate::linalg::symmetrize(&h) * self.scale
    }
}

struct Quadratic {
    center: DVector<f64>,
    hessian: DMatrix<f64>,
    offset: f64,
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, theta: &DVector<f64>) -> f64 {
        let d = theta - &self.center;
        self.offset + 0.5 * d.dot(&(&self.hessian * &d))
    }
    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.hessian * (theta - &self.center)
    }
    fn hessian(&self, _theta: &DVector<f64>) -> DMatrix<f64> {
        self.hessian.clone()
    }
}

struct Shifted {
    base: Landscape,
    shift: DVector<f64>,
}

impl Objective for Shifted {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn value(&self, theta: &DVector<f64>) -> f64 {
        self.base.value(&(theta + &self.shift))
    }
    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.base.gradient(&(theta + &self.shift))
    }
    fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        self.base.hessian(&(theta + &self.shift))
    }
}

struct Regularized {
    base: Landscape,
    alpha: f64,
}

impl Objective for Regularized {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn value(&self, theta: &DVector<f64>) -> f64 {
        self.base.value(theta) + 0.5 * self.alpha * theta.norm_squared()
    }
    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.base.gradient(theta) + theta * self.alpha
    }
    fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let p = self.dim();
        self.base.hessian(theta) + DMatrix::identity(p, p) * self.alpha
    }
}

struct Separable {
    pieces: Vec<Landscape>,
}

impl Objective for Separable {
    fn dim(&self) -> usize {
        self.pieces.len()
    }
    fn value(&self, theta: &DVector<f64>) -> f64 {
        self.pieces.iter().zip(theta.iter()).map(|(u, x)| u.value1(*x)).sum()
    }
    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.pieces.iter().zip(theta.iter()).map(|(u, x)| u.grad1(*x)))
    }
    fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let diag = DVector::from_iterator(self.dim(), self.pieces.iter().zip(theta.iter()).map(|(u, x)| u.hess1(*x)));
        DMatrix::from_diagonal(&diag)
    }
}

type ScalarFn = Box<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type VectorFn = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type MatrixFn = Box<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

struct Closures {
    dim: usize,
    value: ScalarFn,
    gradient: VectorFn,
    hessian: MatrixFn,
}

impl Objective for Closures {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, theta: &DVector<f64>) -> f64 {
        (self.value)(theta)
    }
    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        (self.gradient)(theta)
    }
    fn hessian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        crate::linalg::symmetrize(&(self.hessian)(theta))
    }
}

struct LeastSquares {
    design: DMatrix<f64>,
    targets: DVector<f64>,
    alpha: f64,
}

impl Objective for LeastSquares {
    fn dim(&self) -> usize {
        self.design.ncols()
    }
    fn value(&self, theta: &DVector<f64>) -> f64 {
        let r = &self.design * theta - &self.targets;
        0.5 * r.norm_squared() / self.targets.len() as f64 + 0.5 * self.alpha * theta.norm_squared()
    }
    fn gradient(&self, theta: &DVector<f64>) -> DVector<f64> {
        let r = &self.design * theta - &self.targets;
        self.design.transpose() * r / self.targets.len() as f64 + theta * self.alpha
    }
    fn hessian(&self, _theta: &DVector<f64>) -> DMatrix<f64> {
        let p = self.dim();
        self.design.transpose() * &self.design / self.targets.len() as f64 + DMatrix::identity(p, p) * self.alpha
    }
}

/// Per-sample gradients `a_i (a_iᵀθ − y_i)` of a least-squares loss.
pub fn least_squares_sample_gradients(
    design: &DMatrix<f64>,
    targets: &DVector<f64>,
    theta: &DVector<f64>,
) -> Vec<DVector<f64>> {
    (0..design.nrows())
        .map(|i| {
            let a = design.row(i).transpose();
            let r = a.dot(theta) - targets[i];
            a * r
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    fn unit_bump() -> Landscape {
        // weight e·√(2π) makes the normalized bump peak at exactly −1
        let w = std::f64::consts::E * (2.0 * std::f64::consts::PI).sqrt();
        build_landscape(&BumpSpec::one_d(&[0.0], &[w], &[1.0], 0.0)).unwrap()
    }

    #[test]
    fn unit_bump_value_gradient_curvature() {
        let u = unit_bump();
        assert_relative_eq!(u.value1(0.0), -1.0, epsilon = 1e-14);
        assert_eq!(u.grad1(0.0), 0.0);
        let h = 1e-4;
        let fd = (u.value1(h) - 2.0 * u.value1(0.0) + u.value1(-h)) / (h * h);
        assert_relative_eq!(u.hess1(0.0), 1.0, epsilon = 1e-12);
        assert_relative_eq!(fd, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn mismatched_lists_rejected() {
        let spec = BumpSpec::one_d(&[0.0, 1.0], &[1.0], &[1.0, 1.0], 0.0);
        assert!(matches!(build_landscape(&spec), Err(Error::Config(_))));
        let spec = BumpSpec::one_d(&[0.0], &[1.0], &[0.0], 0.0);
        assert!(build_landscape(&spec).is_err());
    }

    #[test]
    fn wscale_zero_keeps_weights_and_nonzero_perturbs_deterministically() {
        let mut spec = BumpSpec::one_d(&[-1.0, 1.0], &[0.3, 0.4], &[0.1, 0.5], 0.0);
        assert_eq!(spec.effective_weights().unwrap(), vec![0.3, 0.4]);
        spec.weight_perturb = 0.01;
        let a = spec.effective_weights().unwrap();
        assert_eq!(a, spec.effective_weights().unwrap());
        assert_ne!(a, vec![0.3, 0.4]);
    }

    #[test]
    fn lscale_multiplies_loss() {
        let mut spec = BumpSpec::one_d(&[-1.0, 1.0], &[0.021, 0.1], &[0.1, 0.5], 0.001);
        let a = build_landscape(&spec).unwrap();
        spec.loss_scale = 3.0;
        let b = build_landscape(&spec).unwrap();
        assert_relative_eq!(b.value1(0.3), 3.0 * a.value1(0.3), max_relative = 1e-14);
    }

    #[test]
    fn zero_shift_pair_is_identical() {
        let spec = BumpSpec::one_d(&[-1.0, 1.0], &[0.021, 0.1], &[0.1, 0.5], 0.001);
        let pair = make_shifted_pair(&spec, &v1(0.0)).unwrap();
        for i in 0..50 {
            let x = -3.0 + 0.12 * i as f64;
            assert_eq!(pair.train.value1(x), pair.test.value1(x));
        }
    }

    #[test]
    fn shifted_pair_minima_differ_by_shift() {
        let spec = BumpSpec::one_d(&[-1.0, 1.0], &[0.021, 0.1], &[0.1, 0.5], 0.001);
        let pair = make_shifted_pair(&spec, &v1(0.1)).unwrap();
        let dom = crate::grid::Domain::default_for(1);
        let tr = local_minima(&pair.train, &dom, DEFAULT_GRID_N).unwrap();
        let te = local_minima(&pair.test, &dom, DEFAULT_GRID_N).unwrap();
        assert_eq!(tr.len(), 2);
        assert_eq!(te.len(), 2);
        for (a, b) in tr.iter().zip(&te) {
            assert_relative_eq!(a.theta[0] - b.theta[0], 0.1, epsilon = 1e-9);
            assert_relative_eq!(a.value, b.value, epsilon = 1e-12);
            assert_relative_eq!(a.hessian[(0, 0)], b.hessian[(0, 0)], max_relative = 1e-8);
        }
    }

    #[test]
    fn bundled_configs_have_expected_depth_order() {
        let dom = crate::grid::Domain::default_for(1);
        let left = build_landscape(&BumpSpec::one_d(&[-1.0, 1.0], &[0.021, 0.1], &[0.1, 0.5], 0.001)).unwrap();
        let m = local_minima(&left, &dom, DEFAULT_GRID_N).unwrap();
        assert!(m[0].value < m[1].value, "minimum at -1 deeper");
        assert!(m[0].hessian[(0, 0)] > m[1].hessian[(0, 0)], "minimum at 1 wider");
        let right = build_landscape(&BumpSpec::one_d(&[-1.0, 1.0], &[0.019, 0.1], &[0.1, 0.5], 0.001)).unwrap();
        let m = local_minima(&right, &dom, DEFAULT_GRID_N).unwrap();
        assert!(m[1].value < m[0].value, "minimum at 1 deeper and wider");
        let three =
            build_landscape(&BumpSpec::one_d(&[-1.0, 0.0, 1.0], &[0.1, 0.051, 0.3], &[0.1, 0.05, 0.3], 0.001)).unwrap();
        let m = local_minima(&three, &dom, DEFAULT_GRID_N).unwrap();
        assert_eq!(m.len(), 3);
        assert!(m[1].value < m[0].value && m[1].value < m[2].value);
        assert_relative_eq!(m[0].value, m[2].value, epsilon = 1e-6);
        assert!(m[2].hessian[(0, 0)] < m[0].hessian[(0, 0)]);
    }

    #[test]
    fn two_dimensional_bump_hessian_matches_fd() {
        let spec = BumpSpec {
            minima: vec![vec![-1.0, 0.5], vec![1.0, -0.5]],
            weights: vec![0.4, 0.6],
            sigmas: vec![0.5, 0.8],
            confinement: 0.01,
            loss_scale: 1.3,
            weight_perturb: 0.0,
            seed: 0,
        };
        let u = build_landscape(&spec).unwrap();
        let th = DVector::from_vec(vec![0.2, -0.1]);
        let h = 1e-5;
        let hess = u.hessian(&th);
        for j in 0..2 {
            let mut e = DVector::zeros(2);
            e[j] = h;
            let col = (u.gradient(&(&th + &e)) - u.gradient(&(&th - &e))) / (2.0 * h);
            for i in 0..2 {
                assert_relative_eq!(hess[(i, j)], col[i], epsilon = 1e-7);
            }
        }
        assert_eq!(hess[(0, 1)], hess[(1, 0)]);
    }

    proptest! {
        #[test]
        fn shifted_identity_holds(x in -4.0f64..4.0, s in -0.5f64..0.5) {
            let spec = BumpSpec::one_d(&[-1.0, 0.0, 1.0], &[0.1, 0.051, 0.3], &[0.1, 0.05, 0.3], 0.001);
            let pair = make_shifted_pair(&spec, &v1(s)).unwrap();
            prop_assert!((pair.test.value1(x) - pair.train.value1(x + s)).abs() <= 1e-12);
        }

        #[test]
        fn bump_derivatives_match_fd(x in -3.5f64..3.5) {
            let u = build_landscape(&BumpSpec::one_d(&[-1.0, 1.0], &[0.021, 0.1], &[0.1, 0.5], 0.001)).unwrap();
            let h = 1e-6;
            let g = u.grad1(x);
            let gfd = (u.value1(x + h) - u.value1(x - h)) / (2.0 * h);
            prop_assert!((g - gfd).abs() <= 1e-5 * (1.0 + g.abs()));
            let c = u.hess1(x);
            let cfd = (u.grad1(x + h) - u.grad1(x - h)) / (2.0 * h);
            prop_assert!((c - cfd).abs() <= 1e-5 * (1.0 + c.abs()));
        }
    }
}
