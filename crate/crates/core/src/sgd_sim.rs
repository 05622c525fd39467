//! Discrete SGD with Gaussian gradient noise of covariance `λT·D(θ)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::landscape::{DiffusionField, Landscape};
use crate::linalg;
use crate::quad::adaptive_gl;

pub const DEFAULT_BINS: usize = 512;
pub const MIN_POST_BURN_IN: u64 = 1000;

/// Plain SGD settings. The temperature is always `λ/B`.
#[derive(Debug, Clone, PartialEq)]
pub struct SGDConfig {
    pub learning_rate: f64,
    /// Positive real; non-integer values stand for the noise level of a
    /// fractional batch.
    pub batch_size: f64,
    pub steps: u64,
    pub burn_in: u64,
    pub seed: u64,
    pub init: DVector<f64>,
}

impl SGDConfig {
    /// Burn-in defaults to 20% of `steps`.
    pub fn new(learning_rate: f64, batch_size: f64, steps: u64, seed: u64, init: DVector<f64>) -> Result<Self> {
        let cfg = Self { learning_rate, batch_size, steps, burn_in: steps / 5, seed, init };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Picks `B = λ/T`.
    pub fn from_temperature(learning_rate: f64, temperature: f64, steps: u64, seed: u64, init: DVector<f64>) -> Result<Self> {
        if !(temperature > 0.0) {
            return Err(Error::Config(format!("temperature {temperature} must be positive")));
        }
        Self::new(learning_rate, learning_rate / temperature, steps, seed, init)
    }

    pub fn with_burn_in(mut self, burn_in: u64) -> Result<Self> {
        self.burn_in = burn_in;
        self.validate()?;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn temperature(&self) -> f64 {
        self.learning_rate / self.batch_size
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(self.batch_size > 0.0) || !self.batch_size.is_finite() {
            return Err(Error::Config(format!("batch size {} must be positive", self.batch_size)));
        }
        if self.steps == 0 || self.burn_in >= self.steps {
            return Err(Error::Config(format!("need 0 <= burn_in ({}) < steps ({})", self.burn_in, self.steps)));
        }
        if self.init.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("initial state must be finite".into()));
        }
        Ok(())
    }
}

/// SGD with an added `αθ` pull and isotropic noise `β²I`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedSGDConfig {
    pub base: SGDConfig,
    pub alpha: f64,
    pub beta: f64,
}

impl ModifiedSGDConfig {
    pub fn new(base: SGDConfig, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !(beta >= 0.0) {
            return Err(Error::Config(format!("alpha ({alpha}) and beta ({beta}) must be nonnegative")));
        }
        base.validate()?;
        Ok(Self { base, alpha, beta })
    }

    pub fn plain(base: SGDConfig) -> Self {
        Self { base, alpha: 0.0, beta: 0.0 }
    }
}

struct Stepper<'a> {
    landscape: &'a Landscape,
    field: DiffusionField,
    lr: f64,
    noise_scale: f64,
    alpha: f64,
    fixed_sqrt: Option<DMatrix<f64>>,
}

impl<'a> Stepper<'a> {
    fn new(landscape: &'a Landscape, field: &DiffusionField, cfg: &SGDConfig, alpha: f64, beta: f64) -> Result<Self> {
        field.validate()?;
        let field = if beta > 0.0 { field.clone().augmented(beta * beta) } else { field.clone() };
        let fixed_sqrt = if field.is_constant() {
            Some(linalg::psd_sqrt(&field.matrix(&cfg.init)?))
        } else {
            None
        };
        Ok(Self {
            landscape,
            field,
            lr: cfg.learning_rate,
            noise_scale: (cfg.learning_rate * cfg.temperature()).sqrt(),
            alpha,
            fixed_sqrt,
        })
    }

    fn step(&self, theta: &DVector<f64>, rng: &mut ChaCha8Rng, index: u64) -> Result<DVector<f64>> {
        let p = theta.len();
        let mut drift = self.landscape.gradient(theta);
        if self.alpha != 0.0 {
            drift.axpy(self.alpha, theta, 1.0);
        }
        let xi = DVector::from_fn(p, |_, _| StandardNormal.sample(rng));
        let noise = match &self.fixed_sqrt {
            Some(l) => l * xi,
            None => {
                let d = self.field.matrix(theta)?;
                linalg::psd_sqrt(&d) * xi
            }
        };
        let next = theta - drift * self.lr + noise * self.noise_scale;
        if next.iter().any(|x| !x.is_finite()) || !self.landscape.value(&next).is_finite() {
            return Err(Error::Divergence { step: index, last_state: theta.as_slice().to_vec() });
        }
        Ok(next)
    }
}

fn check_dims(landscape: &Landscape, theta: &DVector<f64>) -> Result<()> {
    if theta.len() != landscape.dim() {
        return Err(Error::InvalidArgument(format!("state has dim {}, landscape {}", theta.len(), landscape.dim())));
    }
    Ok(())
}

/// One step `θ − λ∂U(θ) + √(λT)·L(θ)ξ` with `LLᵀ = D(θ)`.
pub fn sgd_step(
    theta: &DVector<f64>,
    landscape: &Landscape,
    field: &DiffusionField,
    cfg: &SGDConfig,
    rng: &mut ChaCha8Rng,
) -> Result<DVector<f64>> {
    check_dims(landscape, theta)?;
    Stepper::new(landscape, field, cfg, 0.0, 0.0)?.step(theta, rng, 0)
}

/// One step `θ − λ(∂U + αθ) + √(λT)·L̃ξ` with `L̃L̃ᵀ = D + β²I`.
pub fn sgd_step_modified(
    theta: &DVector<f64>,
    landscape: &Landscape,
    field: &DiffusionField,
    cfg: &ModifiedSGDConfig,
    rng: &mut ChaCha8Rng,
) -> Result<DVector<f64>> {
    check_dims(landscape, theta)?;
    Stepper::new(landscape, field, &cfg.base, cfg.alpha, cfg.beta)?.step(theta, rng, 0)
}

/// Normalized histogram of coordinate 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub masses: Vec<f64>,
    pub sample_count: u64,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.masses.len()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Mass per unit length.
    pub fn density(&self) -> Vec<f64> {
        self.bin_edges.windows(2).zip(&self.masses).map(|(w, m)| m / (w[1] - w[0])).collect()
    }

    fn ensure_same_bins(&self, other: &Histogram) -> Result<()> {
        if self.bin_edges != other.bin_edges {
            return Err(Error::GridMismatch("histograms have different bin edges".into()));
        }
        Ok(())
    }

    pub fn l1_distance(&self, other: &Histogram) -> Result<f64> {
        self.ensure_same_bins(other)?;
        Ok(self.masses.iter().zip(&other.masses).map(|(a, b)| (a - b).abs()).sum())
    }

    /// `Σ_bins |mass − ∫_bin ρ|` for a density `ρ`.
    pub fn l1_to_density<F: Fn(f64) -> f64>(&self, rho: F) -> f64 {
        self.bin_edges
            .windows(2)
            .zip(&self.masses)
            .map(|(w, m)| {
                let exact: f64 = adaptive_gl(|x| Ok::<f64, ()>(rho(x)), w[0], w[1], 1e-10).unwrap_or(f64::NAN);
                (m - exact).abs()
            })
            .sum()
    }

    /// Mass of bins whose center satisfies `pred`.
    pub fn mass_where<P: Fn(f64) -> bool>(&self, pred: P) -> f64 {
        self.centers().into_iter().zip(&self.masses).filter(|(c, _)| pred(*c)).map(|(_, m)| m).sum()
    }

    /// Pools histograms with weights proportional to sample counts.
    pub fn merge(parts: &[Histogram]) -> Result<Histogram> {
        let first = parts.first().ok_or_else(|| Error::InvalidArgument("nothing to merge".into()))?;
        let total: u64 = parts.iter().map(|h| h.sample_count).sum();
        let mut masses = vec![0.0; first.masses.len()];
        for h in parts {
            first.ensure_same_bins(h)?;
            let w = h.sample_count as f64 / total as f64;
            for (acc, m) in masses.iter_mut().zip(&h.masses) {
                *acc += w * m;
            }
        }
        let s: f64 = masses.iter().sum();
        masses.iter_mut().for_each(|m| *m /= s);
        Ok(Histogram { bin_edges: first.bin_edges.clone(), masses, sample_count: total })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
        w.write_record(["bin_left", "bin_right", "mass"]).map_err(io)?;
        for (e, m) in self.bin_edges.windows(2).zip(&self.masses) {
            w.write_record([e[0].to_string(), e[1].to_string(), m.to_string()]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
        Ok(())
    }
}

/// Counts samples into uniform bins; out-of-range samples go to the edge bins.
#[derive(Debug, Clone)]
pub struct HistogramBuilder {
    lo: f64,
    hi: f64,
    counts: Vec<u64>,
    outside: u64,
}

impl HistogramBuilder {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(hi > lo) || bins == 0 {
            return Err(Error::InvalidArgument(format!("bad histogram range [{lo}, {hi}] with {bins} bins")));
        }
        Ok(Self { lo, hi, counts: vec![0; bins], outside: 0 })
    }

    pub fn add(&mut self, x: f64) {
        let n = self.counts.len();
        let pos = (x - self.lo) / (self.hi - self.lo) * n as f64;
        if !(0.0..n as f64).contains(&pos) {
            self.outside += 1;
        }
        let i = pos.floor().clamp(0.0, (n - 1) as f64) as usize;
        self.counts[i] += 1;
    }

    pub fn outside(&self) -> u64 {
        self.outside
    }

    pub fn finish(&self) -> Result<Histogram> {
        let total: u64 = self.counts.iter().sum();
        if total == 0 {
            return Err(Error::InsufficientSamples { found: 0, required: 1 });
        }
        if self.outside > 0 {
            log::warn!("{} of {} samples fell outside [{}, {}]", self.outside, total, self.lo, self.hi);
        }
        let n = self.counts.len();
        let width = (self.hi - self.lo) / n as f64;
        let bin_edges = (0..=n).map(|i| if i == n { self.hi } else { self.lo + i as f64 * width }).collect();
        let masses = self.counts.iter().map(|c| *c as f64 / total as f64).collect();
        Ok(Histogram { bin_edges, masses, sample_count: total })
    }
}

/// Welford running mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }
}

/// Mean and batch-means standard error of a correlated series.
#[derive(Debug, Clone)]
pub struct BatchMeans {
    batch_len: u64,
    current: RunningStats,
    batches: Vec<f64>,
}

impl BatchMeans {
    /// Splits `total` expected samples into `batches` batches.
    pub fn new(total: u64, batches: u64) -> Self {
        Self { batch_len: (total / batches.max(1)).max(1), current: RunningStats::default(), batches: Vec::new() }
    }

    pub fn push(&mut self, x: f64) {
        self.current.push(x);
        if self.current.count == self.batch_len {
            self.batches.push(self.current.mean);
            self.current = RunningStats::default();
        }
    }

    pub fn batch_count(&self) -> usize {
        self.batches.len()
    }

    pub fn mean(&self) -> f64 {
        self.batches.iter().sum::<f64>() / self.batches.len() as f64
    }

    /// Standard error of [`BatchMeans::mean`].
    pub fn std_error(&self) -> f64 {
        let n = self.batches.len() as f64;
        let m = self.mean();
        let var = self.batches.iter().map(|b| (b - m).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    }
}

/// What a chain records besides the histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOptions {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
    /// Keep every `k`-th post-burn-in state.
    pub trace_stride: Option<u64>,
}

impl ChainOptions {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi, bins: DEFAULT_BINS, trace_stride: None }
    }

    pub fn with_bins(mut self, bins: usize) -> Self {
        self.bins = bins;
        self
    }

    pub fn with_trace(mut self, stride: u64) -> Self {
        self.trace_stride = Some(stride.max(1));
        self
    }
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub histogram: Histogram,
    /// `(step, θ)` pairs.
    pub trace: Option<Vec<(u64, DVector<f64>)>>,
    /// Moments of coordinate 0 over post-burn-in iterates.
    pub stats: RunningStats,
    /// Batch means of `θ·∂U − (T/2)·tr D` over post-burn-in iterates.
    pub stationarity: BatchMeans,
    pub final_state: DVector<f64>,
}

/// Runs a chain and calls `observe` on every post-burn-in iterate.
pub fn run_chain_observed<F>(
    landscape: &Landscape,
    field: &DiffusionField,
    cfg: &ModifiedSGDConfig,
    opts: &ChainOptions,
    mut observe: F,
) -> Result<ChainOutput>
where
    F: FnMut(&DVector<f64>),
{
    let base = &cfg.base;
    base.validate()?;
    check_dims(landscape, &base.init)?;
    if base.steps < base.burn_in + MIN_POST_BURN_IN {
        return Err(Error::Config(format!(
            "steps ({}) must exceed burn_in ({}) by at least {MIN_POST_BURN_IN}",
            base.steps, base.burn_in
        )));
    }
    let stepper = Stepper::new(landscape, field, base, cfg.alpha, cfg.beta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(base.seed);
    let mut hist = HistogramBuilder::new(opts.lo, opts.hi, opts.bins)?;
    let mut stats = RunningStats::default();
    let post = base.steps - base.burn_in;
    let mut stationarity = BatchMeans::new(post, 32);
    let half_t = 0.5 * base.temperature();
    let mut trace = opts.trace_stride.map(|_| Vec::new());
    let mut theta = base.init.clone();
    for step in 1..=base.steps {
        theta = stepper.step(&theta, &mut rng, step)?;
        if step <= base.burn_in {
            continue;
        }
        hist.add(theta[0]);
        stats.push(theta[0]);
        let d = field.matrix(&theta)?;
        stationarity.push(theta.dot(&landscape.gradient(&theta)) - half_t * d.trace());
        if let (Some(tr), Some(k)) = (trace.as_mut(), opts.trace_stride) {
            if (step - base.burn_in).is_multiple_of(k) {
                tr.push((step, theta.clone()));
            }
        }
        observe(&theta);
    }
    Ok(ChainOutput { histogram: hist.finish()?, trace, stats, stationarity, final_state: theta })
}

/// Plain SGD chain.
pub fn run_chain(landscape: &Landscape, field: &DiffusionField, cfg: &SGDConfig, opts: &ChainOptions) -> Result<ChainOutput> {
    run_chain_observed(landscape, field, &ModifiedSGDConfig::plain(cfg.clone()), opts, |_| {})
}

/// Modified SGD chain.
pub fn run_chain_modified(
    landscape: &Landscape,
    field: &DiffusionField,
    cfg: &ModifiedSGDConfig,
    opts: &ChainOptions,
) -> Result<ChainOutput> {
    run_chain_observed(landscape, field, cfg, opts, |_| {})
}

/// Writes `step,theta_0..theta_{p-1}`.
pub fn write_trace_csv<W: Write>(trace: &[(u64, DVector<f64>)], out: W) -> Result<()> {
    let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
    let mut w = csv::Writer::from_writer(out);
    let p = trace.first().map_or(0, |(_, t)| t.len());
    let mut header = vec!["step".to_string()];
    header.extend((0..p).map(|i| format!("theta_{i}")));
    w.write_record(&header).map_err(io)?;
    for (step, theta) in trace {
        let mut row = vec![step.to_string()];
        row.extend(theta.iter().map(|x| x.to_string()));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    Ok(())
}
