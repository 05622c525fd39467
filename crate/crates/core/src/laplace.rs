//! Gaussian-mixture (Laplace) approximation of the steady state.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::grid::{Domain, Grid};
use crate::landscape::{local_minima, DiffusionField, Landscape, Minimum};
use crate::linalg;
use crate::steady_state::{effective_potential, EffectivePotential, GriddedDensity};

/// One mixture component.
#[derive(Debug, Clone, PartialEq)]
pub struct Basin {
    /// Minimum of `v`.
    pub mu: DVector<f64>,
    /// Paired minimum of the training loss.
    pub train_min: DVector<f64>,
    /// `θ^tr − μ`.
    pub bias: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub weight: f64,
    pub v_value: f64,
    pub hess_v: DMatrix<f64>,
    /// Training-loss Hessian at `train_min`.
    pub train_hessian: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureApprox {
    pub basins: Vec<Basin>,
    pub temperature: f64,
}

impl MixtureApprox {
    pub fn weights(&self) -> Vec<f64> {
        self.basins.iter().map(|b| b.weight).collect()
    }

    /// Writes `k,mu,b,sigma,w,v_k`; vector entries are space-separated.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        let join = |v: &DVector<f64>| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "mu", "b", "sigma", "w", "v_k"]).map_err(io)?;
        for (k, b) in self.basins.iter().enumerate() {
            let sigma = DVector::from_iterator(b.cov.nrows(), b.cov.diagonal().iter().map(|s| s.sqrt()));
            w.write_record([k.to_string(), join(&b.mu), join(&b.bias), join(&sigma), b.weight.to_string(), b.v_value.to_string()])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        Ok(())
    }
}

fn normalize_log(logs: &[f64]) -> Vec<f64> {
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|r| r / s).collect()
}

/// Unnormalized `log w_k = −2v_k/T − ½ log|∂²v_k|`.
pub fn log_basin_weights(v_values: &[f64], hessians: &[DMatrix<f64>], temperature: f64) -> Result<Vec<f64>> {
    if v_values.len() != hessians.len() || v_values.is_empty() {
        return Err(Error::InvalidArgument(format!("{} values for {} Hessians", v_values.len(), hessians.len())));
    }
    v_values
        .iter()
        .zip(hessians)
        .enumerate()
        .map(|(k, (v, h))| {
            let logdet = linalg::spd_logdet(h, &format!("Hessian of v at basin {k}"))?;
            Ok(-2.0 * v / temperature - 0.5 * logdet)
        })
        .collect()
}

/// Normalized basin weights `w_k ∝ exp(−2v_k/T)|∂²v_k|^{−1/2}`.
pub fn basin_weights(v_values: &[f64], hessians: &[DMatrix<f64>], temperature: f64) -> Result<Vec<f64>> {
    Ok(normalize_log(&log_basin_weights(v_values, hessians, temperature)?))
}

/// `b = (T/2) C⁻¹ (∂·D)(θ^tr)`.
pub fn component_bias(train_min: &DVector<f64>, c_train: &DMatrix<f64>, field: &DiffusionField, temperature: f64) -> Result<DVector<f64>> {
    let (_, div) = field.eval(train_min)?;
    let inv = linalg::spd_inverse(c_train, "training Hessian")?;
    Ok(inv * div * (0.5 * temperature))
}

/// `Σ = (T/2)(∂²v)⁻¹`.
pub fn component_cov(hess_v: &DMatrix<f64>, temperature: f64) -> Result<DMatrix<f64>> {
    Ok(linalg::spd_inverse(hess_v, "Hessian of v")? * (0.5 * temperature))
}

/// Log of the order-`J` basin weight for a diagonal `J`-th derivative with
/// entries `eigs`.
pub fn log_higher_order_weight(j: u32, eigs: &[f64], v_k: f64, temperature: f64) -> Result<f64> {
    if j < 2 || !j.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("order J = {j} must be even and at least 2")));
    }
    if eigs.is_empty() {
        return Err(Error::InvalidArgument("no derivative entries".into()));
    }
    if let Some(bad) = eigs.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::NotPositiveDefinite { what: format!("order-{j} derivative"), min_eig: *bad });
    }
    let jf = j as f64;
    let p = eigs.len() as f64;
    let log_det: f64 = eigs.iter().map(|e| e.ln()).sum();
    let log_fact = ln_gamma(jf + 1.0);
    let log_gamma_term = (2.0f64.ln() + ln_gamma((jf + 1.0) / jf)) * p;
    Ok(-2.0 * v_k / temperature - log_det / jf + p / jf * ((temperature / 2.0).ln() + log_fact) + log_gamma_term)
}

/// `exp(−2v_k/T)·|dᴶv|^{−1/J}·(T·J!/2)^{p/J}·(2Γ((J+1)/J))^p`.
pub fn higher_order_weight(j: u32, eigs: &[f64], v_k: f64, temperature: f64) -> Result<f64> {
    Ok(log_higher_order_weight(j, eigs, v_k, temperature)?.exp())
}

/// Gaussian density of `N(mu, cov)` at `x`.
pub fn gaussian_pdf(x: &DVector<f64>, mu: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let p = x.len() as f64;
    let inv = linalg::spd_inverse(cov, "covariance")?;
    let logdet = linalg::spd_logdet(cov, "covariance")?;
    let d = x - mu;
    Ok((-0.5 * linalg::quad_form(&inv, &d) - 0.5 * logdet - 0.5 * p * (2.0 * std::f64::consts::PI).ln()).exp())
}

/// Mixture evaluated on `grid` and renormalized to unit trapezoid mass.
pub fn mixture_density(m: &MixtureApprox, grid: &Grid) -> Result<GriddedDensity> {
    let mut comps = Vec::with_capacity(m.basins.len());
    for b in &m.basins {
        let inv = linalg::spd_inverse(&b.cov, "covariance")?;
        let logdet = linalg::spd_logdet(&b.cov, "covariance")?;
        comps.push((b, inv, logdet));
    }
    let p = grid.dim() as f64;
    let values = (0..grid.len())
        .map(|i| {
            let x = grid.point(i);
            comps
                .iter()
                .map(|(b, inv, logdet)| {
                    let d = &x - &b.mu;
                    b.weight * (-0.5 * linalg::quad_form(inv, &d) - 0.5 * logdet - 0.5 * p * (2.0 * std::f64::consts::PI).ln()).exp()
                })
                .sum()
        })
        .collect();
    GriddedDensity::from_unnormalized(grid.clone(), values, m.temperature)
}

/// Pairs each minimum of `v` with its nearest training minimum. Two minima
/// of `v` claiming the same training minimum is an error.
pub fn pair_nearest(mu: &[DVector<f64>], train: &[DVector<f64>]) -> Result<Vec<usize>> {
    if train.is_empty() {
        return Err(Error::Pairing("no training minima".into()));
    }
    let mut used = vec![false; train.len()];
    let mut out = Vec::with_capacity(mu.len());
    for (k, m) in mu.iter().enumerate() {
        let mut dists: Vec<(usize, f64)> = train.iter().enumerate().map(|(i, t)| (i, (m - t).norm())).collect();
        dists.sort_by(|a, b| a.1.total_cmp(&b.1));
        if dists.len() > 1 && (dists[1].1 - dists[0].1).abs() <= 1e-9 * dists[0].1.max(1e-12) {
            return Err(Error::AmbiguousBasin { candidates: vec![train[dists[0].0].as_slice().to_vec(), train[dists[1].0].as_slice().to_vec()] });
        }
        let i = dists[0].0;
        if used[i] {
            return Err(Error::Pairing(format!("minimum {k} of v pairs with an already used training minimum {i}")));
        }
        used[i] = true;
        out.push(i);
    }
    Ok(out)
}

/// Builds the mixture from the minima of `v` (effective potential) paired with the
/// minima of the training loss.
pub fn laplace_mixture(
    landscape: &Landscape,
    field: &DiffusionField,
    temperature: f64,
    domain: &Domain,
    grid_n: usize,
) -> Result<MixtureApprox> {
    let vpot = effective_potential(landscape, field, temperature, domain)?;
    mixture_from_potential(&vpot, domain, grid_n)
}

pub fn mixture_from_potential(vpot: &EffectivePotential, domain: &Domain, grid_n: usize) -> Result<MixtureApprox> {
    let temperature = vpot.temperature();
    let vmins: Vec<Minimum> = local_minima(vpot, domain, grid_n)?;
    if vmins.is_empty() {
        return Err(Error::InvalidArgument("effective potential has no minima in the domain".into()));
    }
    let tmins: Vec<Minimum> = local_minima(vpot.landscape(), domain, grid_n)?;
    let pairing = pair_nearest(
        &vmins.iter().map(|m| m.theta.clone()).collect::<Vec<_>>(),
        &tmins.iter().map(|m| m.theta.clone()).collect::<Vec<_>>(),
    )?;
    let v_values: Vec<f64> = vmins.iter().map(|m| m.value).collect();
    let hess: Vec<DMatrix<f64>> = vmins.iter().map(|m| m.hessian.clone()).collect();
    let weights = basin_weights(&v_values, &hess, temperature)?;
    let basins = vmins
        .into_iter()
        .zip(pairing)
        .zip(weights)
        .map(|((m, i), w)| {
            let tr = &tmins[i];
            Ok(Basin {
                bias: &tr.theta - &m.theta,
                train_min: tr.theta.clone(),
                cov: component_cov(&m.hessian, temperature)?,
                weight: w,
                v_value: m.value,
                hess_v: m.hessian,
                train_hessian: tr.hessian.clone(),
                mu: m.theta,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MixtureApprox { basins, temperature })
}
