//! Invertible reparametrizations θ = r(y) and a report of which test-loss
//! terms survive them.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::Domain;
use crate::landscape::{polish_minimum, Landscape, Objective, Provenance, TrainTestPair};
use crate::laplace::{pair_nearest, MixtureApprox};
use crate::linalg;
use crate::quad::adaptive_gl;
use crate::steady_state::EffectivePotential;
use crate::testloss::shift_records;

const ROUND_TRIP_TOL: f64 = 1e-10;
const JACOBIAN_TOL: f64 = 1e-6;
const QUAD_RTOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub enum RepFamily {
    /// θ = a·y.
    LinearScale(f64),
    /// θ = A·y + b.
    Affine { a: DMatrix<f64>, b: DVector<f64> },
    /// θ = y + ε·tanh(y), one-dimensional, |ε| < 1.
    SmoothMonotone1d { name: String, eps: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reparametrization {
    family: RepFamily,
    dim: usize,
    /// Cached inverse of `A` for affine maps.
    a_inv: Option<DMatrix<f64>>,
}

impl Reparametrization {
    pub fn identity(dim: usize) -> Self {
        Self { family: RepFamily::LinearScale(1.0), dim, a_inv: None }
    }

    pub fn linear_scale(dim: usize, a: f64) -> Result<Self> {
        if a == 0.0 || !a.is_finite() {
            return Err(Error::InvalidArgument(format!("scale {a} is not invertible")));
        }
        Ok(Self { family: RepFamily::LinearScale(a), dim, a_inv: None })
    }

    pub fn affine(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.len() {
            return Err(Error::InvalidArgument("affine map needs square A and matching b".into()));
        }
        let svd = a.clone().svd(false, false);
        let (smin, smax) = (svd.singular_values.min(), svd.singular_values.max());
        if !(smin > 1e-12 * smax) {
            return Err(Error::InvalidArgument(format!("affine map is singular (σ_min = {smin:e})")));
        }
        let a_inv = a.clone().try_inverse().ok_or_else(|| Error::InvalidArgument("affine map is singular".into()))?;
        Ok(Self { dim: b.len(), family: RepFamily::Affine { a, b }, a_inv: Some(a_inv) })
    }

    /// `y ↦ y + ε·tanh(y)`.
    pub fn smooth_monotone_1d(eps: f64) -> Result<Self> {
        if !(eps.abs() < 1.0) {
            return Err(Error::InvalidArgument(format!("ε = {eps} does not give a monotone map")));
        }
        Ok(Self { family: RepFamily::SmoothMonotone1d { name: format!("y+{eps}*tanh(y)"), eps }, dim: 1, a_inv: None })
    }

    pub fn family(&self) -> &RepFamily {
        &self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_linear(&self) -> bool {
        !matches!(self.family, RepFamily::SmoothMonotone1d { .. })
    }

    pub fn tag(&self) -> String {
        match &self.family {
            RepFamily::LinearScale(a) => format!("linear_scale({a})"),
            RepFamily::Affine { .. } => "affine".into(),
            RepFamily::SmoothMonotone1d { name, .. } => format!("smooth_monotone_1d({name})"),
        }
    }

    /// θ = r(y).
    pub fn forward(&self, y: &DVector<f64>) -> DVector<f64> {
        match &self.family {
            RepFamily::LinearScale(a) => y * *a,
            RepFamily::Affine { a, b } => a * y + b,
            RepFamily::SmoothMonotone1d { eps, .. } => y.map(|v| v + eps * v.tanh()),
        }
    }

    /// y = r⁻¹(θ).
    pub fn inverse(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.family {
            RepFamily::LinearScale(a) => Ok(theta / *a),
            RepFamily::Affine { b, .. } => Ok(self.a_inv.as_ref().expect("affine inverse") * (theta - b)),
            RepFamily::SmoothMonotone1d { eps, .. } => {
                let t = theta[0];
                let mut y = t;
                for _ in 0..100 {
                    let f = y + eps * y.tanh() - t;
                    let step = f / (1.0 + eps / y.cosh().powi(2));
                    y -= step;
                    if step.abs() <= 1e-15 * (1.0 + y.abs()) {
                        return Ok(DVector::from_element(1, y));
                    }
                }
                Err(Error::Domain { theta: theta.as_slice().to_vec(), detail: "inverse did not converge".into() })
            }
        }
    }

    /// `∂_y r(y)`.
    pub fn jacobian(&self, y: &DVector<f64>) -> DMatrix<f64> {
        match &self.family {
            RepFamily::LinearScale(a) => DMatrix::identity(self.dim, self.dim) * *a,
            RepFamily::Affine { a, .. } => a.clone(),
            RepFamily::SmoothMonotone1d { eps, .. } => DMatrix::from_element(1, 1, 1.0 + eps / y[0].cosh().powi(2)),
        }
    }

    /// `Σ_i g_i ∂²r_i(y)`.
    fn second_order(&self, y: &DVector<f64>, g: &DVector<f64>) -> DMatrix<f64> {
        match &self.family {
            RepFamily::SmoothMonotone1d { eps, .. } => {
                let (t, c) = (y[0].tanh(), y[0].cosh());
                DMatrix::from_element(1, 1, -2.0 * eps * t / (c * c) * g[0])
            }
            _ => DMatrix::zeros(self.dim, self.dim),
        }
    }

    /// Checks round trips and the Jacobian on probe points of `domain`
    /// (θ-coordinates).
    pub fn validate_on(&self, domain: &Domain) -> Result<()> {
        if domain.dim() != self.dim {
            return Err(Error::InvalidArgument(format!("domain dimension {} != map dimension {}", domain.dim(), self.dim)));
        }
        let n = 33usize;
        let per_axis = if self.dim == 1 { 257 } else { n.min(5) };
        let total = per_axis.pow(self.dim as u32);
        let h = 1e-6;
        for idx in 0..total {
            let mut rem = idx;
            let theta = DVector::from_fn(self.dim, |i, _| {
                let k = rem % per_axis;
                rem /= per_axis;
                domain.lo[i] + (domain.hi[i] - domain.lo[i]) * k as f64 / (per_axis - 1) as f64
            });
            let y = self.inverse(&theta)?;
            let back = self.forward(&y);
            if (&back - &theta).norm() > ROUND_TRIP_TOL * (1.0 + theta.norm()) {
                return Err(Error::InvalidArgument(format!("map is not invertible near {:?}", theta.as_slice())));
            }
            let j = self.jacobian(&y);
            for c in 0..self.dim {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[c] += h;
                ym[c] -= h;
                let col = (self.forward(&yp) - self.forward(&ym)) / (2.0 * h);
                if (col - j.column(c)).norm() > JACOBIAN_TOL * (1.0 + j.norm()) {
                    return Err(Error::InvalidArgument(format!("Jacobian disagrees with differences near {:?}", theta.as_slice())));
                }
            }
        }
        Ok(())
    }

    /// Image of a θ-box under r⁻¹ (axis-aligned maps only).
    pub fn pull_domain(&self, domain: &Domain) -> Result<Domain> {
        if let RepFamily::Affine { a, .. } = &self.family {
            if !linalg::is_diagonal(a) {
                return Err(Error::InvalidArgument("rotated affine maps do not send boxes to boxes".into()));
            }
        }
        let lo = self.inverse(&DVector::from_vec(domain.lo.clone()))?;
        let hi = self.inverse(&DVector::from_vec(domain.hi.clone()))?;
        let (l, h): (Vec<f64>, Vec<f64>) = lo.iter().zip(hi.iter()).map(|(a, b)| (a.min(*b), a.max(*b))).unzip();
        Domain::new(l, h)
    }
}

struct Pushforward {
    base: Landscape,
    rep: Reparametrization,
}

impl Objective for Pushforward {
    fn dim(&self) -> usize {
        self.rep.dim
    }

    fn value(&self, y: &DVector<f64>) -> f64 {
        self.base.value(&self.rep.forward(y))
    }

    fn gradient(&self, y: &DVector<f64>) -> DVector<f64> {
        self.rep.jacobian(y).transpose() * self.base.gradient(&self.rep.forward(y))
    }

    fn hessian(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let theta = self.rep.forward(y);
        let j = self.rep.jacobian(y);
        j.transpose() * self.base.hessian(&theta) * &j + self.rep.second_order(y, &self.base.gradient(&theta))
    }
}

/// `U^r(y) = U(r(y))` after checking that `rep` is invertible on `domain`.
pub fn pushforward_landscape(landscape: &Landscape, rep: &Reparametrization, domain: &Domain) -> Result<Landscape> {
    if landscape.dim() != rep.dim {
        return Err(Error::InvalidArgument(format!("landscape dimension {} != map dimension {}", landscape.dim(), rep.dim)));
    }
    rep.validate_on(domain)?;
    Ok(Landscape::from_objective(
        Arc::new(Pushforward { base: landscape.clone(), rep: rep.clone() }),
        Provenance::Pushforward(rep.tag()),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceTerm {
    pub term: String,
    pub theta_value: f64,
    pub y_value: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub rep: String,
    pub rows: Vec<InvarianceTerm>,
}

impl InvarianceReport {
    fn push(&mut self, term: String, theta_value: f64, y_value: f64) {
        self.rows.push(InvarianceTerm { term, theta_value, y_value, delta: (y_value - theta_value).abs() });
    }

    pub fn get(&self, term: &str) -> Option<&InvarianceTerm> {
        self.rows.iter().find(|r| r.term == term)
    }

    /// Largest delta among terms whose name starts with `prefix`.
    pub fn max_delta(&self, prefix: &str) -> f64 {
        self.rows.iter().filter(|r| r.term.starts_with(prefix)).map(|r| r.delta).fold(0.0, f64::max)
    }

    /// `y/θ` ratio of the raw test curvature in basin `k`.
    pub fn curvature_ratio(&self, k: usize) -> Option<f64> {
        self.get(&format!("raw_curvature_{k}")).map(|r| r.y_value / r.theta_value)
    }

    /// Writes `term,theta_value,y_value,delta`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["term", "theta_value", "y_value", "delta"]).map_err(io)?;
        for r in &self.rows {
            w.write_record([r.term.clone(), r.theta_value.to_string(), r.y_value.to_string(), r.delta.to_string()]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))
    }
}

fn at(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

/// Compares test-loss terms in θ and in y = r⁻¹(θ) for a 1D pair.
///
/// Expected loss and basin masses use adaptive quadrature of the exact
/// steady state, with `ρ_Y(y) = ρ(r(y))·|r'(y)|` on the y side. Taylor
/// terms use the mixture `mix` built from `vpot`; the raw test curvature
/// is reported as a control that is not expected to match.
pub fn invariance_report(
    pair: &TrainTestPair,
    vpot: &EffectivePotential,
    mix: &MixtureApprox,
    rep: &Reparametrization,
    domain: &Domain,
) -> Result<InvarianceReport> {
    if pair.dim() != 1 || rep.dim != 1 || domain.dim() != 1 {
        return Err(Error::InvalidArgument("invariance report is one-dimensional".into()));
    }
    if mix.basins.is_empty() {
        return Err(Error::InvalidArgument("mixture has no basins".into()));
    }
    let train_y = pushforward_landscape(&pair.train, rep, domain)?;
    let test_y = pushforward_landscape(&pair.test, rep, domain)?;
    let t = vpot.temperature();
    let (lo, hi) = (domain.lo[0], domain.hi[0]);

    let mut mus: Vec<f64> = mix.basins.iter().map(|b| b.mu[0]).collect();
    mus.sort_by(f64::total_cmp);
    let mut cuts = Vec::with_capacity(mus.len().saturating_sub(1));
    for w in mus.windows(2) {
        let mut best = (w[0], f64::NEG_INFINITY);
        for i in 1..2048 {
            let x = w[0] + (w[1] - w[0]) * i as f64 / 2048.0;
            let v = vpot.value(&at(x))?;
            if v > best.1 {
                best = (x, v);
            }
        }
        cuts.push(best.0);
    }
    let vmin = mix.basins.iter().map(|b| b.v_value).fold(f64::INFINITY, f64::min);
    let q = |x: f64| -> Result<f64> { Ok((-(2.0 / t) * (vpot.value(&at(x))? - vmin)).exp()) };

    let mut breaks: Vec<f64> = [lo, hi].into_iter().chain(mus.iter().copied()).chain(cuts.iter().copied()).collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let ybreaks: Vec<f64> = breaks.iter().map(|x| rep.inverse(&at(*x)).map(|y| y[0])).collect::<Result<_>>()?;
    let jac = |y: f64| rep.jacobian(&at(y))[(0, 0)].abs();

    let integrate_theta = |f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64| -> Result<f64> {
        let mut s = 0.0;
        for w in breaks.windows(2) {
            let (l, r) = (w[0].max(a), w[1].min(b));
            if r > l {
                s += adaptive_gl(f, l, r, QUAD_RTOL)?;
            }
        }
        Ok(s)
    };
    let integrate_y = |f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64| -> Result<f64> {
        let mut s = 0.0;
        for w in ybreaks.windows(2) {
            let (l, r) = (w[0].min(w[1]).max(a), w[0].max(w[1]).min(b));
            if r > l {
                s += adaptive_gl(f, l, r, QUAD_RTOL)?;
            }
        }
        Ok(s)
    };
    let rho_y = |y: f64| -> Result<f64> { Ok(q(rep.forward(&at(y))[0])? * jac(y)) };

    let (ylo, yhi) = {
        let (a, b) = (ybreaks[0], *ybreaks.last().unwrap());
        (a.min(b), a.max(b))
    };
    let z_theta = integrate_theta(&q, lo, hi)?;
    let z_y = integrate_y(&rho_y, ylo, yhi)?;
    let e_theta = integrate_theta(&|x| Ok(pair.test.value1(x) * q(x)?), lo, hi)? / z_theta;
    let e_y = integrate_y(&|y| Ok(test_y.value1(y) * rho_y(y)?), ylo, yhi)? / z_y;

    let mut report = InvarianceReport { rep: rep.tag(), rows: Vec::new() };
    report.push("expected_test_loss".into(), e_theta, e_y);

    let mut edges = vec![lo];
    edges.extend(cuts.iter().copied());
    edges.push(hi);
    for (k, w) in edges.windows(2).enumerate() {
        let m_theta = integrate_theta(&q, w[0], w[1])? / z_theta;
        let (a, b) = (rep.inverse(&at(w[0]))?[0], rep.inverse(&at(w[1]))?[0]);
        let m_y = integrate_y(&rho_y, a.min(b), a.max(b))? / z_y;
        report.push(format!("w_{k}"), m_theta, m_y);
    }

    let records = shift_records(pair, domain, crate::landscape::DEFAULT_GRID_N)?;
    let train_mins: Vec<DVector<f64>> = records.iter().map(|r| r.train_min.clone()).collect();
    let mut order: Vec<usize> = (0..mix.basins.len()).collect();
    order.sort_by(|a, b| mix.basins[*a].mu[0].total_cmp(&mix.basins[*b].mu[0]));
    let (mut taylor_theta, mut taylor_y) = (0.0, 0.0);
    for (k, &bi) in order.iter().enumerate() {
        let basin = &mix.basins[bi];
        let rec = &records[pair_nearest(std::slice::from_ref(&basin.train_min), &train_mins)?[0]];
        let c = &rec.test_hessian;
        let s = &rec.shift;
        let b = &basin.bias;

        let y_tr = polish_minimum(&train_y, &rep.inverse(&rec.train_min)?)?.theta;
        let test_min_y = polish_minimum(&test_y, &rep.inverse(&rec.test_min)?)?;
        let y_te = &test_min_y.theta;
        let c_r = &test_min_y.hessian;
        let j = rep.jacobian(y_te);
        let j_inv = linalg::spd_inverse(&(j.transpose() * &j), "Jacobian Gram matrix")? * j.transpose();
        let sigma_r = &j_inv * &basin.cov * j_inv.transpose();
        let s_r = y_te - &y_tr;
        let b_r = &y_tr - rep.inverse(&basin.mu)?;

        let terms_theta = [
            rec.test_min_loss,
            linalg::quad_form(c, s),
            (&basin.cov * c).trace(),
            linalg::quad_form(c, b),
            b.dot(&(c * s)),
        ];
        let terms_y = [
            test_min_y.value,
            linalg::quad_form(c_r, &s_r),
            (&sigma_r * c_r).trace(),
            linalg::quad_form(c_r, &b_r),
            b_r.dot(&(c_r * &s_r)),
        ];
        for (name, (a, bv)) in ["U_test", "shift_curvature", "trace_sigma_c", "bias_curvature", "bias_shift"].iter().zip(terms_theta.iter().zip(&terms_y)) {
            report.push(format!("{name}_{k}"), *a, *bv);
        }
        let total = |v: &[f64; 5]| v[0] + 0.5 * v[1] + 0.5 * v[2] + 0.5 * v[3] + v[4];
        taylor_theta += basin.weight * total(&terms_theta);
        taylor_y += basin.weight * total(&terms_y);
        report.push(format!("raw_curvature_{k}"), c.trace(), c_r.trace());
    }
    report.push("taylor_test_loss".into(), taylor_theta, taylor_y);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::{build_landscape, make_shifted_pair, local_minima, BumpSpec, DiffusionField};
    use crate::laplace::mixture_from_potential;
    use crate::steady_state::effective_potential;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn two_basin() -> BumpSpec {
        BumpSpec::one_d(&[-1.0, 1.0], &[0.021, 0.1], &[0.1, 0.5], 0.001)
    }

    fn report_for(rep: &Reparametrization, shift: f64, t: f64) -> InvarianceReport {
        let dom = Domain::cube(1, -4.0, 4.0);
        let pair = make_shifted_pair(&two_basin(), &at(shift)).unwrap();
        let vpot = effective_potential(&pair.train, &DiffusionField::ConstantScalar(1.0), t, &dom).unwrap();
        let mix = mixture_from_potential(&vpot, &dom, 4096).unwrap();
        invariance_report(&pair, &vpot, &mix, rep, &dom).unwrap()
    }

    #[test]
    fn identity_pushforward_is_identical() {
        let u = build_landscape(&two_basin()).unwrap();
        let p = pushforward_landscape(&u, &Reparametrization::identity(1), &Domain::cube(1, -4.0, 4.0)).unwrap();
        for x in [-2.0, -1.0, 0.3, 1.7] {
            assert_eq!(p.value1(x), u.value1(x));
            assert_eq!(p.grad1(x), u.grad1(x));
            assert_eq!(p.hess1(x), u.hess1(x));
        }
    }

    #[test]
    fn scaling_a_quadratic() {
        let u = Landscape::quadratic_1d(0.0, 1.0, 0.0);
        let rep = Reparametrization::linear_scale(1, 2.0).unwrap();
        let p = pushforward_landscape(&u, &rep, &Domain::cube(1, -3.0, 3.0)).unwrap();
        assert_relative_eq!(p.value1(0.7), 2.0 * 0.49, epsilon = 1e-15);
        assert_relative_eq!(p.hess1(0.0), 4.0, epsilon = 1e-15);
    }

    #[test]
    fn monotone_map_keeps_minima() {
        let u = build_landscape(&two_basin()).unwrap();
        let dom = Domain::cube(1, -4.0, 4.0);
        let rep = Reparametrization::smooth_monotone_1d(0.2).unwrap();
        let p = pushforward_landscape(&u, &rep, &dom).unwrap();
        let before = local_minima(&u, &dom, 4096).unwrap();
        let after = local_minima(&p, &rep.pull_domain(&dom).unwrap(), 4096).unwrap();
        assert_eq!(before.len(), after.len());
        for (a, b) in before.iter().zip(&after) {
            assert_relative_eq!(rep.forward(&b.theta)[0], a.theta[0], epsilon = 1e-7);
        }
    }

    #[test]
    fn pushforward_derivatives_match_differences() {
        let u = build_landscape(&two_basin()).unwrap();
        let rep = Reparametrization::smooth_monotone_1d(-0.4).unwrap();
        let p = pushforward_landscape(&u, &rep, &Domain::cube(1, -4.0, 4.0)).unwrap();
        let dom = rep.pull_domain(&Domain::cube(1, -3.0, 3.0)).unwrap();
        assert!(crate::oracle::fd_check(&p, &dom, 200, 5) <= 1e-5);
    }

    #[test]
    fn invalid_maps_rejected() {
        assert!(Reparametrization::linear_scale(1, 0.0).is_err());
        assert!(Reparametrization::smooth_monotone_1d(1.0).is_err());
        assert!(Reparametrization::affine(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]), DVector::zeros(2)).is_err());
        let u = Landscape::quadratic_1d(0.0, 1.0, 0.0);
        let rep = Reparametrization::identity(2);
        assert!(pushforward_landscape(&u, &rep, &Domain::cube(1, -1.0, 1.0)).is_err());
    }

    #[test]
    fn linear_scale_terms_cancel_exactly() {
        let r = report_for(&Reparametrization::linear_scale(1, 2.0).unwrap(), 0.1, 0.05);
        for row in &r.rows {
            if row.term.starts_with("raw_curvature") {
                continue;
            }
            let tol = if row.term == "expected_test_loss" || row.term.starts_with("w_") { 1e-8 } else { 1e-10 };
            assert!(row.delta <= tol * (1.0 + row.theta_value.abs()), "{row:?}");
        }
        assert_relative_eq!(r.curvature_ratio(0).unwrap(), 4.0, max_relative = 1e-9);
    }

    #[test]
    fn affine_terms_cancel_exactly() {
        let rep = Reparametrization::affine(DMatrix::from_element(1, 1, -0.5), at(0.3)).unwrap();
        let r = report_for(&rep, 0.1, 0.05);
        assert!(r.max_delta("shift_curvature") <= 1e-10);
        assert!(r.max_delta("trace_sigma_c") <= 1e-10);
        assert!(r.get("expected_test_loss").unwrap().delta <= 1e-8);
    }

    #[test]
    fn smooth_map_expected_loss_and_weights_invariant() {
        let r = report_for(&Reparametrization::smooth_monotone_1d(0.2).unwrap(), 0.1, 0.05);
        assert!(r.get("expected_test_loss").unwrap().delta <= 1e-8, "{:?}", r.get("expected_test_loss"));
        assert!(r.max_delta("w_") <= 1e-8);
        assert!(r.max_delta("U_test") <= 1e-10);
        assert!((r.curvature_ratio(0).unwrap() - 1.0).abs() > 1e-3);
    }

    #[test]
    fn smooth_map_shift_delta_is_second_order() {
        let rep = Reparametrization::smooth_monotone_1d(0.2).unwrap();
        let big = report_for(&rep, 0.1, 0.05);
        let small = report_for(&rep, 0.05, 0.05);
        for k in 0..2 {
            let d_big = big.get(&format!("shift_curvature_{k}")).unwrap().delta;
            let d_small = small.get(&format!("shift_curvature_{k}")).unwrap().delta;
            assert!(d_big >= 3.0 * d_small, "basin {k}: {d_big} vs {d_small}");
        }
    }

    #[test]
    fn csv_shape() {
        let r = report_for(&Reparametrization::linear_scale(1, 2.0).unwrap(), 0.1, 0.05);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("term,theta_value,y_value,delta\nexpected_test_loss,"));
    }

    proptest! {
        #[test]
        fn monotone_round_trip(eps in -0.9f64..0.9, x in -6.0f64..6.0) {
            let rep = Reparametrization::smooth_monotone_1d(eps).unwrap();
            let y = rep.inverse(&at(x)).unwrap();
            prop_assert!((rep.forward(&y)[0] - x).abs() <= 1e-12 * (1.0 + x.abs()));
        }

        #[test]
        fn affine_round_trip(a in 0.2f64..3.0, c in -1.0f64..1.0, b0 in -1.0f64..1.0, x0 in -3.0f64..3.0, x1 in -3.0f64..3.0) {
            let m = DMatrix::from_row_slice(2, 2, &[a, c, 0.0, 1.0 / a]);
            let rep = Reparametrization::affine(m, DVector::from_vec(vec![b0, -b0])).unwrap();
            let th = DVector::from_vec(vec![x0, x1]);
            let y = rep.inverse(&th).unwrap();
            prop_assert!((rep.forward(&y) - &th).norm() <= 1e-10 * (1.0 + th.norm()));
        }
    }
}
