use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 6;

/// Cumulants `κ_1..κ_n` of a scalar distribution, `n ≤ 6`.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantSet {
    values: Vec<f64>,
}

impl CumulantSet {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() > MAX_ORDER {
            return Err(Error::InvalidArgument(format!("cumulant order {} not in 1..={MAX_ORDER}", values.len())));
        }
        if values.len() >= 2 && !(values[1] >= 0.0) {
            return Err(Error::InvalidArgument(format!("second cumulant {} is negative", values[1])));
        }
        Ok(Self { values })
    }

    pub fn order(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `κ_j`, 1-based; zero beyond the stored order.
    pub fn get(&self, j: usize) -> f64 {
        self.values.get(j.wrapping_sub(1)).copied().unwrap_or(0.0)
    }
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Raw moments `m_1..m_n` via `m_n = Σ_k C(n−1,k−1) κ_k m_{n−k}`.
pub fn moments_from_cumulants(c: &CumulantSet) -> Vec<f64> {
    let n = c.order();
    let mut m = vec![1.0];
    for order in 1..=n {
        let s = (1..=order).map(|k| binom(order - 1, k - 1) * c.get(k) * m[order - k]).sum();
        m.push(s);
    }
    m.split_off(1)
}

/// Inverse of [`moments_from_cumulants`].
pub fn cumulants_from_moments(moments: &[f64]) -> Result<CumulantSet> {
    if moments.is_empty() || moments.len() > MAX_ORDER {
        return Err(Error::InvalidArgument(format!("moment order {} not in 1..={MAX_ORDER}", moments.len())));
    }
    let m = |j: usize| if j == 0 { 1.0 } else { moments[j - 1] };
    let mut k: Vec<f64> = Vec::with_capacity(moments.len());
    for order in 1..=moments.len() {
        let lower: f64 = (1..order).map(|j| binom(order - 1, j - 1) * k[j - 1] * m(order - j)).sum();
        k.push(m(order) - lower);
    }
    if k.len() >= 2 && k[1] < 0.0 {
        // roundoff in a degenerate variance
        k[1] = k[1].max(0.0);
    }
    CumulantSet::new(k)
}

/// Sample cumulants up to `order` from central sample moments.
pub fn sample_cumulants(xs: &[f64], order: usize) -> Result<CumulantSet> {
    if xs.len() < 2 {
        return Err(Error::InsufficientSamples { found: xs.len(), required: 2 });
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let mut central = vec![0.0; order];
    for x in xs {
        let d = x - mean;
        let mut pw = 1.0;
        for c in central.iter_mut() {
            pw *= d;
            *c += pw;
        }
    }
    central.iter_mut().for_each(|c| *c /= n);
    let mut k = cumulants_from_moments(&central)?.values;
    k[0] = mean;
    CumulantSet::new(k)
}

/// Sums `K` Gaussian increments with mean `κ_1/K` and variance `κ_2/K` over
/// `trials` draws and returns `|κ̂_j(S_K) − κ_j|` for every order in `target`.
pub fn increment_matching_error(target: &CumulantSet, k: usize, trials: usize, seed: u64) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    let mean = target.get(1) / k as f64;
    let sd = (target.get(2) / k as f64).sqrt();
    let normal = Normal::new(mean, sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sums: Vec<f64> = (0..trials).map(|_| (0..k).map(|_| normal.sample(&mut rng)).sum()).collect();
    let est = sample_cumulants(&sums, target.order())?;
    Ok(est.values().iter().zip(target.values()).map(|(a, b)| (a - b).abs()).collect())
}
