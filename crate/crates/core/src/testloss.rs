//! Test loss through shift, bias and covariance curvature terms.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::Domain;
use crate::landscape::{local_minima, Minimum, TrainTestPair};
use crate::laplace::MixtureApprox;
use crate::linalg;

/// A train minimum, its paired test minimum and the shift between them.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftRecord {
    pub k: usize,
    pub train_min: DVector<f64>,
    pub test_min: DVector<f64>,
    /// `θ^test − θ^tr`.
    pub shift: DVector<f64>,
    /// `sᵀ C^test s`.
    pub shift_curvature: f64,
    pub test_min_loss: f64,
    pub test_hessian: DMatrix<f64>,
}

impl ShiftRecord {
    pub fn new(k: usize, train_min: DVector<f64>, test: &Minimum) -> Self {
        let shift = &test.theta - &train_min;
        Self {
            k,
            shift_curvature: linalg::quad_form(&test.hessian, &shift),
            train_min,
            test_min: test.theta.clone(),
            shift,
            test_min_loss: test.value,
            test_hessian: test.hessian.clone(),
        }
    }

    /// Record whose shift is replaced by `s` (e.g. a projected shift).
    pub fn with_shift(mut self, s: DVector<f64>) -> Self {
        self.shift_curvature = linalg::quad_form(&self.test_hessian, &s);
        self.shift = s;
        self
    }
}

/// Pairs every train minimum with its nearest test minimum. The pairing
/// distance must stay below half the smallest spacing between train minima.
pub fn shift_records(pair: &TrainTestPair, domain: &Domain, grid_n: usize) -> Result<Vec<ShiftRecord>> {
    let train = local_minima(&pair.train, domain, grid_n)?;
    let test = local_minima(&pair.test, domain, grid_n)?;
    pair_minima(&train, &test)
}

pub fn pair_minima(train: &[Minimum], test: &[Minimum]) -> Result<Vec<ShiftRecord>> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Pairing(format!("{} train and {} test minima", train.len(), test.len())));
    }
    let mut spacing = f64::INFINITY;
    for (i, a) in train.iter().enumerate() {
        for b in &train[i + 1..] {
            spacing = spacing.min((&a.theta - &b.theta).norm());
        }
    }
    let mut used = vec![false; test.len()];
    let mut out = Vec::with_capacity(train.len());
    for (k, tr) in train.iter().enumerate() {
        let (j, d) = test
            .iter()
            .enumerate()
            .map(|(j, te)| (j, (&te.theta - &tr.theta).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty");
        if d >= 0.5 * spacing {
            return Err(Error::Pairing(format!(
                "train minimum {k} is {d} from the nearest test minimum, not below half the minima spacing {spacing}"
            )));
        }
        if used[j] {
            return Err(Error::Pairing(format!("test minimum {j} claimed twice")));
        }
        used[j] = true;
        out.push(ShiftRecord::new(k, tr.theta.clone(), &test[j]));
    }
    Ok(out)
}

/// Index of the record whose train minimum is nearest to `theta`.
pub fn assign_basin(theta: &DVector<f64>, records: &[ShiftRecord]) -> Result<usize> {
    let mut d: Vec<(usize, f64)> = records.iter().enumerate().map(|(i, r)| (i, (&r.train_min - theta).norm())).collect();
    d.sort_by(|a, b| a.1.total_cmp(&b.1));
    match d.as_slice() {
        [] => Err(Error::Pairing("no basins".into())),
        [a, b, ..] if (b.1 - a.1).abs() <= 1e-9 * a.1.max(1e-12) => Err(Error::AmbiguousBasin {
            candidates: vec![records[a.0].train_min.as_slice().to_vec(), records[b.0].train_min.as_slice().to_vec()],
        }),
        [a, ..] => Ok(a.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorPrediction {
    pub predicted: f64,
    pub actual: f64,
    /// `actual − predicted`.
    pub gap: f64,
}

/// `U_k^test + ½(s_k + b̂)ᵀC_k^test(s_k + b̂)` with `b̂ = θ_k^tr − θ̂`.
pub fn taylor_test_at(theta_hat: &DVector<f64>, pair: &TrainTestPair, record: &ShiftRecord) -> TaylorPrediction {
    let sb = &record.shift + (&record.train_min - theta_hat);
    let predicted = record.test_min_loss + 0.5 * linalg::quad_form(&record.test_hessian, &sb);
    let actual = pair.test.value(theta_hat);
    TaylorPrediction { predicted, actual, gap: actual - predicted }
}

/// Per-basin contributions to the averaged test loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasinTestTerms {
    pub k: usize,
    pub weight: f64,
    pub test_min_loss: f64,
    /// `½ sᵀCs`.
    pub shift_term: f64,
    /// `½ Tr[ΣC]`.
    pub trace_term: f64,
    /// `bᵀCs + ½ bᵀCb`.
    pub bias_term: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestLossBreakdown {
    pub temperature: f64,
    pub basins: Vec<BasinTestTerms>,
    pub total: f64,
}

impl TestLossBreakdown {
    pub fn weighted(&self, f: impl Fn(&BasinTestTerms) -> f64) -> f64 {
        self.basins.iter().map(|b| b.weight * f(b)).sum()
    }

    /// Writes `T,k,w,U_test_k,shift_curv,trace_term,bias_term,total`.
    pub fn write_csv<W: Write>(&self, out: W, header: bool) -> Result<()> {
        let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        if header {
            w.write_record(["T", "k", "w", "U_test_k", "shift_curv", "trace_term", "bias_term", "total"]).map_err(io)?;
        }
        for b in &self.basins {
            w.write_record([
                self.temperature.to_string(),
                b.k.to_string(),
                b.weight.to_string(),
                b.test_min_loss.to_string(),
                b.shift_term.to_string(),
                b.trace_term.to_string(),
                b.bias_term.to_string(),
                b.total.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        Ok(())
    }
}

/// `Σ_k w_k{U_k^test + ½Tr[Σ_kC_k] + ½(s_k+b_k)ᵀC_k(s_k+b_k)}` with the
/// terms reported separately.
pub fn expected_test_loss_mixture(mix: &MixtureApprox, records: &[ShiftRecord]) -> Result<TestLossBreakdown> {
    let mut basins = Vec::with_capacity(mix.basins.len());
    for (k, b) in mix.basins.iter().enumerate() {
        let r = records
            .iter()
            .find(|r| (&r.train_min - &b.train_min).norm() <= 1e-6)
            .ok_or_else(|| Error::Pairing(format!("mixture basin {k} has no matching shift record")))?;
        let c = &r.test_hessian;
        let shift_term = 0.5 * linalg::quad_form(c, &r.shift);
        let trace_term = 0.5 * (&b.cov * c).trace();
        let bias_term = b.bias.dot(&(c * &r.shift)) + 0.5 * linalg::quad_form(c, &b.bias);
        basins.push(BasinTestTerms {
            k,
            weight: b.weight,
            test_min_loss: r.test_min_loss,
            shift_term,
            trace_term,
            bias_term,
            total: r.test_min_loss + shift_term + trace_term + bias_term,
        });
    }
    let total = basins.iter().map(|b| b.weight * b.total).sum();
    Ok(TestLossBreakdown { temperature: mix.temperature, basins, total })
}

/// `Σ_k w_k(U_k^test + ½ s_kᵀC_k s_k)`.
pub fn sgd_expected_test_loss(weights: &[f64], records: &[ShiftRecord]) -> Result<f64> {
    if weights.len() != records.len() {
        return Err(Error::InvalidArgument(format!("{} weights for {} basins", weights.len(), records.len())));
    }
    Ok(weights.iter().zip(records).map(|(w, r)| w * (r.test_min_loss + 0.5 * r.shift_curvature)).sum())
}

/// Projection of `θ^test − θ^tr` onto the span of the per-sample test
/// gradients.
pub fn projected_shift(gradients: &[DVector<f64>], test_min: &DVector<f64>, train_min: &DVector<f64>) -> Result<DVector<f64>> {
    if gradients.is_empty() {
        return Err(Error::InvalidArgument("no per-sample gradients".into()));
    }
    let diff = test_min - train_min;
    let basis = linalg::orthonormal_basis(gradients, 1e-10);
    if basis.is_empty() {
        log::warn!("per-sample gradients span a zero-dimensional space; projected shift set to 0");
        return Ok(DVector::zeros(diff.len()));
    }
    Ok(basis.iter().fold(DVector::zeros(diff.len()), |acc, q| acc + q * q.dot(&diff)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::{build_landscape, least_squares_sample_gradients, make_shifted_pair, BumpSpec, DiffusionField, Landscape, LossTransform};
    use crate::laplace::laplace_mixture;
    use crate::steady_state::steady_state_on;
    use crate::grid::Grid;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn v1(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    fn two_basin_left() -> BumpSpec {
        BumpSpec::one_d(&[-1.0, 1.0], &[0.021, 0.1], &[0.1, 0.5], 0.001)
    }

    fn quadratic_pair(c: f64, s: f64) -> TrainTestPair {
        TrainTestPair::new(Landscape::quadratic_1d(0.0, c, 0.0), Landscape::quadratic_1d(s, c, 0.0)).unwrap()
    }

    #[test]
    fn quadratic_taylor_is_exact() {
        let pair = quadratic_pair(3.0, 0.4);
        let dom = Domain::new(vec![-2.0], vec![2.0]).unwrap();
        let recs = shift_records(&pair, &dom, 401).unwrap();
        assert_eq!(recs.len(), 1);
        let p = taylor_test_at(&v1(0.0), &pair, &recs[0]);
        assert!((p.predicted - 0.5 * 3.0 * 0.16).abs() <= 1e-12);
        assert!(p.gap.abs() <= 1e-12);
        let q = taylor_test_at(&v1(0.37), &pair, &recs[0]);
        assert!(q.gap.abs() <= 1e-12);

        let zero = quadratic_pair(3.0, 0.0);
        let r0 = shift_records(&zero, &dom, 401).unwrap();
        assert_eq!(taylor_test_at(&v1(0.0), &zero, &r0[0]).predicted, r0[0].test_min_loss);
    }

    #[test]
    fn two_basin_taylor_within_five_percent() {
        let pair = make_shifted_pair(&two_basin_left(), &v1(0.1)).unwrap();
        let recs = shift_records(&pair, &Domain::default_for(1), 4096).unwrap();
        assert_eq!(recs.len(), 2);
        for r in &recs {
            assert!(r.shift_curvature >= 0.0);
            assert_relative_eq!(r.shift.norm(), 0.1, max_relative = 1e-6);
            let p = taylor_test_at(&r.train_min, &pair, r);
            assert!((p.gap / p.actual).abs() <= 0.05, "{p:?}");
        }
    }

    #[test]
    fn ambiguous_basin_is_reported() {
        let recs: Vec<ShiftRecord> = [-1.0, 1.0]
            .iter()
            .enumerate()
            .map(|(k, x)| ShiftRecord::new(k, v1(*x), &Minimum { theta: v1(*x), value: 0.0, hessian: DMatrix::identity(1, 1) }))
            .collect();
        assert!(matches!(assign_basin(&v1(0.0), &recs), Err(Error::AmbiguousBasin { .. })));
        assert_eq!(assign_basin(&v1(0.2), &recs).unwrap(), 1);
    }

    #[test]
    fn single_basin_mixture_collapses() {
        let pair = quadratic_pair(2.0, 0.0);
        let dom = Domain::new(vec![-2.0], vec![2.0]).unwrap();
        let t = 0.02;
        let mix = laplace_mixture(&pair.train, &DiffusionField::ConstantScalar(1.0), t, &dom, 401).unwrap();
        let recs = shift_records(&pair, &dom, 401).unwrap();
        let e = expected_test_loss_mixture(&mix, &recs).unwrap();
        // Σ = T/(2c), ½Tr[ΣC] = T/4
        assert_relative_eq!(e.total, t / 4.0, max_relative = 1e-9);
        assert_eq!(e.basins[0].shift_term, 0.0);
    }

    #[test]
    fn mixture_matches_quadrature_for_small_t() {
        let pair = make_shifted_pair(&two_basin_left(), &v1(0.1)).unwrap();
        let dom = Domain::default_for(1);
        let recs = shift_records(&pair, &dom, 4096).unwrap();
        let grid = Grid::uniform_1d(-4.0, 4.0, 1 << 14).unwrap();
        let f = DiffusionField::ConstantScalar(1.0);
        for t in [0.005, 0.01, 0.02] {
            let mix = laplace_mixture(&pair.train, &f, t, &dom, 4096).unwrap();
            let e = expected_test_loss_mixture(&mix, &recs).unwrap();
            let rho = steady_state_on(&pair.train, &f, t, &grid).unwrap();
            let oracle = rho.expect(|x| pair.test.value(x));
            assert!((e.total / oracle - 1.0).abs() <= 0.05, "T={t}: {} vs {oracle}", e.total);
        }
    }

    #[test]
    fn wide_basin_has_smaller_shift_term() {
        let spec = BumpSpec::one_d(&[-1.0, 1.0], &[0.1, 0.5], &[0.1, 0.5], 0.001);
        let pair = make_shifted_pair(&spec, &v1(0.1)).unwrap();
        let recs = shift_records(&pair, &Domain::default_for(1), 4096).unwrap();
        assert_relative_eq!(recs[0].test_min_loss, recs[1].test_min_loss, max_relative = 1e-3);
        let narrow = sgd_expected_test_loss(&[0.9, 0.1], &recs).unwrap();
        let wide = sgd_expected_test_loss(&[0.1, 0.9], &recs).unwrap();
        assert!(wide < narrow);
        assert!(recs[1].shift_curvature < recs[0].shift_curvature);
    }

    #[test]
    fn decomposition_identity_and_linear_scaling() {
        let train = build_landscape(&two_basin_left()).unwrap();
        let pair = TrainTestPair::from_train(train, &v1(0.1)).unwrap();
        let base = Landscape::quadratic_1d(3.0, 0.2, 1.0);
        let f = DiffusionField::IsotropicOfLoss { transform: LossTransform::Log, base };
        let dom = Domain::default_for(1);
        let recs = shift_records(&pair, &dom, 4096).unwrap();
        let mut extra = Vec::new();
        for t in [0.02, 0.01] {
            let mix = laplace_mixture(&pair.train, &f, t, &dom, 4096).unwrap();
            let e = expected_test_loss_mixture(&mix, &recs).unwrap();
            let plain = sgd_expected_test_loss(&mix.weights(), &recs).unwrap();
            let tr = e.weighted(|b| b.trace_term);
            let bias = e.weighted(|b| b.bias_term);
            assert!((e.total - plain - tr - bias).abs() <= 1e-12);
            assert!(mix.basins.iter().all(|b| b.bias.norm() > 0.0));
            extra.push((e.basins.iter().map(|b| b.trace_term).collect::<Vec<_>>(), e.basins.iter().map(|b| b.bias_term).collect::<Vec<_>>()));
        }
        for k in 0..2 {
            let tr_ratio = extra[0].0[k] / extra[1].0[k];
            let bias_ratio = extra[0].1[k] / extra[1].1[k];
            assert!((tr_ratio / 2.0 - 1.0).abs() <= 0.2, "trace ratio {tr_ratio}");
            assert!((bias_ratio / 2.0 - 1.0).abs() <= 0.2, "bias ratio {bias_ratio}");
        }
    }

    #[test]
    fn projection_cases() {
        let e = |i: usize| DVector::from_fn(3, |j, _| if i == j { 1.0 } else { 0.0 });
        let full = projected_shift(&[e(0), e(1), e(2)], &DVector::from_vec(vec![1.0, 2.0, 3.0]), &DVector::zeros(3)).unwrap();
        assert!((full - DVector::from_vec(vec![1.0, 2.0, 3.0])).norm() < 1e-14);
        let z = projected_shift(&[e(0), e(1)], &e(2), &DVector::zeros(3)).unwrap();
        assert_eq!(z.norm(), 0.0);
        let none = projected_shift(&[DVector::zeros(3)], &e(2), &DVector::zeros(3)).unwrap();
        assert_eq!(none.norm(), 0.0);
    }

    #[test]
    fn overparametrized_prediction_ignores_nullspace() {
        let x = DMatrix::from_row_slice(3, 5, &[1.0, 0.5, -0.2, 0.0, 0.3, 0.0, 1.0, 0.4, -0.6, 0.1, 0.2, -0.3, 1.0, 0.5, 0.0]);
        let y_tr = DVector::from_vec(vec![1.0, -0.5, 0.3]);
        let y_te = DVector::from_vec(vec![1.2, -0.4, 0.1]);
        let alpha = 1e-5;
        let train = Landscape::least_squares(x.clone(), y_tr, alpha).unwrap();
        let test = Landscape::least_squares(x.clone(), y_te.clone(), 0.0).unwrap();
        let pair = TrainTestPair::new(train.clone(), test.clone()).unwrap();
        let theta_tr = crate::landscape::polish_minimum(&train, &DVector::zeros(5)).unwrap().theta;
        let pinv = x.clone().pseudo_inverse(1e-12).unwrap();
        let theta_te = &pinv * &y_te;
        let svd = x.clone().svd(false, true);
        let vt = svd.v_t.unwrap();
        let null: Vec<DVector<f64>> = (0..5)
            .map(|i| DVector::from_fn(5, |j, _| if i == j { 1.0 } else { 0.0 }))
            .map(|v| {
                let row_part = (0..3).fold(DVector::zeros(5), |acc: DVector<f64>, r| {
                    let q = vt.row(r).transpose();
                    acc + &q * q.dot(&v)
                });
                v - row_part
            })
            .collect();
        let grads = least_squares_sample_gradients(&x, &y_te, &theta_tr);
        let mut preds = Vec::new();
        for (i, w) in null.iter().take(5).enumerate() {
            let rep = &theta_te + w * (i as f64 + 1.0);
            assert!(test.gradient(&rep).norm() < 1e-10);
            let s = projected_shift(&grads, &rep, &theta_tr).unwrap();
            let m = Minimum { theta: rep.clone(), value: test.value(&rep), hessian: test.hessian(&rep) };
            let rec = ShiftRecord::new(0, theta_tr.clone(), &m).with_shift(s);
            preds.push(taylor_test_at(&theta_tr, &pair, &rec).predicted);
        }
        let (lo, hi) = preds.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(*p), b.max(*p)));
        assert!(hi - lo <= 1e-10, "{preds:?}");
        assert_relative_eq!(preds[0], test.value(&theta_tr), max_relative = 1e-8);
    }
}
