use std::io::Write;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::quadrature::{basin_boundaries, basin_masses, basin_of};
use crate::error::{Error, Result};
use crate::grid::{Domain, Grid};
use crate::landscape::{local_minima, DiffusionField, TrainTestPair};
use crate::laplace::laplace_mixture;
use crate::sgd_sim::{run_chain_observed, ChainOptions, ModifiedSGDConfig, RunningStats, SGDConfig};
use crate::steady_state::steady_state_on;
use crate::testloss::{expected_test_loss_mixture, pair_minima, ShiftRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Quadrature,
    Laplace,
    SgdMc,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Quadrature, Method::Laplace, Method::SgdMc];

    pub fn name(self) -> &'static str {
        match self {
            Method::Quadrature => "quadrature",
            Method::Laplace => "laplace",
            Method::SgdMc => "sgd_mc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown method `{s}` (expected quadrature, laplace or sgd_mc)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdMcSettings {
    pub learning_rate: f64,
    pub steps: u64,
    pub chains: usize,
    pub seed: u64,
}

impl Default for SgdMcSettings {
    fn default() -> Self {
        Self { learning_rate: 1e-4, steps: 200_000, chains: 8, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSetup {
    pub pair: TrainTestPair,
    pub field: DiffusionField,
    pub domain: Domain,
    /// Quadrature cells along the single axis.
    pub cells: usize,
    /// Scan resolution used when locating minima.
    pub minima_grid: usize,
    pub sgd: SgdMcSettings,
}

impl SweepSetup {
    pub const DEFAULT_CELLS: usize = 16384;

    pub fn new(pair: TrainTestPair, field: DiffusionField, domain: Domain) -> Self {
        Self {
            pair,
            field,
            domain,
            cells: Self::DEFAULT_CELLS,
            minima_grid: crate::landscape::DEFAULT_GRID_N,
            sgd: SgdMcSettings::default(),
        }
    }
}

/// Between-chain diagnostics for the Monte Carlo rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingDiagnostic {
    pub chains: usize,
    pub rhat: f64,
    pub se_train: f64,
    pub se_test: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub temperature: f64,
    pub method: Method,
    pub e_train: f64,
    pub e_test: f64,
    pub basin_probs: Vec<f64>,
    /// `p_k · ½ sₖᵀCₖsₖ` per basin.
    pub shift_curv_terms: Vec<f64>,
    pub mixing: Option<MixingDiagnostic>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn method_rows(&self, method: Method) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.method == method).collect()
    }

    pub fn basin_count(&self) -> usize {
        self.rows.first().map_or(0, |r| r.basin_probs.len())
    }

    /// One line per row: `T,method,E_train,E_test,p_basin_k...,shift_curv_k...`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let k = self.basin_count();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["T".to_string(), "method".into(), "E_train".into(), "E_test".into()];
        header.extend((0..k).map(|i| format!("p_basin_{i}")));
        header.extend((0..k).map(|i| format!("shift_curv_{i}")));
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![r.temperature.to_string(), r.method.name().into(), r.e_train.to_string(), r.e_test.to_string()];
            rec.extend(r.basin_probs.iter().map(|p| p.to_string()));
            rec.extend(r.shift_curv_terms.iter().map(|p| p.to_string()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))
    }

    /// Monte Carlo rows only: `T,chains,rhat,se_train,se_test`.
    pub fn write_diagnostics_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["T", "chains", "rhat", "se_train", "se_test"]).map_err(csv_err)?;
        for r in &self.rows {
            if let Some(d) = r.mixing {
                w.write_record([
                    r.temperature.to_string(),
                    d.chains.to_string(),
                    d.rhat.to_string(),
                    d.se_train.to_string(),
                    d.se_test.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

/// SplitMix64 over `base` and two stream indices.
pub fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    let mut z = base ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct Shared {
    grid: Grid,
    u_train: Vec<f64>,
    u_test: Vec<f64>,
    /// Coordinates of the interior maxima of the training loss.
    cuts: Vec<f64>,
    /// Shift record for each basin, in basin order.
    records: Vec<ShiftRecord>,
}

impl Shared {
    fn new(setup: &SweepSetup) -> Result<Self> {
        if setup.pair.dim() != 1 {
            return Err(Error::InvalidArgument("the temperature sweep is one-dimensional".into()));
        }
        let grid = Grid::over(&setup.domain, setup.cells)?;
        let xs = grid.axes[0].nodes();
        let u_train: Vec<f64> = xs.iter().map(|x| setup.pair.train.value1(*x)).collect();
        let u_test: Vec<f64> = xs.iter().map(|x| setup.pair.test.value1(*x)).collect();
        let cuts: Vec<f64> = basin_boundaries(&u_train).into_iter().map(|i| xs[i]).collect();
        let train = local_minima(&setup.pair.train, &setup.domain, setup.minima_grid)?;
        let test = local_minima(&setup.pair.test, &setup.domain, setup.minima_grid)?;
        let mut records = pair_minima(&train, &test)?;
        if let Some(s) = &setup.pair.shift {
            records = records.into_iter().map(|r| r.with_shift(s.clone())).collect();
        }
        records.sort_by(|a, b| a.train_min[0].total_cmp(&b.train_min[0]));
        if records.len() != cuts.len() + 1 {
            return Err(Error::Pairing(format!("{} training minima but {} basins", records.len(), cuts.len() + 1)));
        }
        for (k, r) in records.iter().enumerate() {
            if basin_of(r.train_min[0], &cuts) != k {
                return Err(Error::Pairing(format!("minimum at {} is not in basin {k}", r.train_min[0])));
            }
        }
        Ok(Self { grid, u_train, u_test, cuts, records })
    }

    fn shift_terms(&self, probs: &[f64]) -> Vec<f64> {
        probs.iter().zip(&self.records).map(|(p, r)| p * 0.5 * r.shift_curvature).collect()
    }
}

/// Evaluates every method at every temperature. Rows come back sorted by
/// method, then temperature.
pub fn temperature_sweep(setup: &SweepSetup, temperatures: &[f64], methods: &[Method]) -> Result<SweepTable> {
    if temperatures.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidArgument("temperatures must be positive and finite".into()));
    }
    let shared = Shared::new(setup)?;
    let jobs: Vec<(usize, f64, Method)> = methods
        .iter()
        .flat_map(|m| temperatures.iter().enumerate().map(move |(i, t)| (i, *t, *m)))
        .collect();
    let mut rows = jobs
        .par_iter()
        .map(|&(i, t, m)| sweep_row(setup, &shared, i, t, m).map_err(|e| e.at_temperature(t)))
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.method.cmp(&b.method).then(a.temperature.total_cmp(&b.temperature)));
    Ok(SweepTable { rows })
}

fn sweep_row(setup: &SweepSetup, shared: &Shared, index: usize, t: f64, method: Method) -> Result<SweepRow> {
    match method {
        Method::Quadrature => {
            let rho = steady_state_on(&setup.pair.train, &setup.field, t, &shared.grid)?;
            let probs = basin_masses(&rho, &shared.u_train)?;
            Ok(SweepRow {
                temperature: t,
                method,
                e_train: rho.expect_values(&shared.u_train)?,
                e_test: rho.expect_values(&shared.u_test)?,
                shift_curv_terms: shared.shift_terms(&probs),
                basin_probs: probs,
                mixing: None,
            })
        }
        Method::Laplace => {
            let mix = laplace_mixture(&setup.pair.train, &setup.field, t, &setup.domain, setup.minima_grid)?;
            let mut probs = vec![0.0; shared.records.len()];
            let mut per_basin = Vec::with_capacity(mix.basins.len());
            for b in &mix.basins {
                let k = basin_of(b.train_min[0], &shared.cuts);
                probs[k] += b.weight;
                per_basin.push(shared.records[k].clone());
            }
            let breakdown = expected_test_loss_mixture(&mix, &per_basin)?;
            let e_train = mix
                .basins
                .iter()
                .map(|b| {
                    let c = &b.train_hessian;
                    b.weight * (setup.pair.train.value(&b.train_min) + 0.5 * (&b.cov * c).trace() + 0.5 * b.bias.dot(&(c * &b.bias)))
                })
                .sum();
            Ok(SweepRow {
                temperature: t,
                method,
                e_train,
                e_test: breakdown.total,
                shift_curv_terms: shared.shift_terms(&probs),
                basin_probs: probs,
                mixing: None,
            })
        }
        Method::SgdMc => sgd_row(setup, shared, index, t),
    }
}

fn sgd_row(setup: &SweepSetup, shared: &Shared, index: usize, t: f64) -> Result<SweepRow> {
    let s = &setup.sgd;
    if s.chains < 2 {
        return Err(Error::Config("sgd_mc needs at least two chains".into()));
    }
    let rho = steady_state_on(&setup.pair.train, &setup.field, t, &shared.grid)?;
    let opts = ChainOptions::new(setup.domain.lo[0], setup.domain.hi[0]).with_bins(64);
    let k = shared.records.len();
    let per_chain = (0..s.chains)
        .into_par_iter()
        .map(|c| {
            let seed = derive_seed(s.seed, index as u64, c as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_A5A5);
            let init = DVector::from_element(1, rho.sample_1d(&mut rng));
            let cfg = SGDConfig::from_temperature(s.learning_rate, t, s.steps, seed, init)?;
            let mut tr = RunningStats::default();
            let mut te = RunningStats::default();
            let mut counts = vec![0u64; k];
            run_chain_observed(&setup.pair.train, &setup.field, &ModifiedSGDConfig::plain(cfg), &opts, |th| {
                tr.push(setup.pair.train.value(th));
                te.push(setup.pair.test.value(th));
                counts[basin_of(th[0], &shared.cuts)] += 1;
            })?;
            Ok((tr, te, counts))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = s.chains as f64;
    let means_tr: Vec<f64> = per_chain.iter().map(|(a, _, _)| a.mean).collect();
    let means_te: Vec<f64> = per_chain.iter().map(|(_, b, _)| b.mean).collect();
    let (e_train, var_tr) = mean_and_var(&means_tr);
    let (e_test, var_te) = mean_and_var(&means_te);
    let len = per_chain[0].0.count as f64;
    let within = per_chain.iter().map(|(a, _, _)| a.variance()).sum::<f64>() / n;
    let rhat = if within > 0.0 { (((len - 1.0) / len * within + var_tr) / within).sqrt() } else { f64::NAN };
    let total: u64 = per_chain.iter().flat_map(|(_, _, c)| c.iter()).sum();
    let probs: Vec<f64> = (0..k)
        .map(|j| per_chain.iter().map(|(_, _, c)| c[j]).sum::<u64>() as f64 / total as f64)
        .collect();
    Ok(SweepRow {
        temperature: t,
        method: Method::SgdMc,
        e_train,
        e_test,
        shift_curv_terms: shared.shift_terms(&probs),
        basin_probs: probs,
        mixing: Some(MixingDiagnostic { chains: s.chains, rhat, se_train: (var_tr / n).sqrt(), se_test: (var_te / n).sqrt() }),
    })
}

/// Sample mean and unbiased variance.
fn mean_and_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::landscape::{make_shifted_pair, BumpSpec, Landscape};
    use approx::assert_relative_eq;

    fn quadratic_setup() -> SweepSetup {
        let train = Landscape::quadratic_1d(0.0, 2.0, 0.0);
        let pair = TrainTestPair::from_train(train, &DVector::from_element(1, 0.1)).unwrap();
        let mut s = SweepSetup::new(pair, DiffusionField::ConstantScalar(1.0), Domain::cube(1, -3.0, 3.0));
        s.cells = 8192;
        s.sgd = SgdMcSettings { learning_rate: 1e-2, steps: 200_000, chains: 8, seed: 7 };
        s
    }

    #[test]
    fn quadratic_rows_match_closed_form() {
        let setup = quadratic_setup();
        let ts = [0.01, 0.05];
        let table = temperature_sweep(&setup, &ts, &Method::ALL).unwrap();
        assert_eq!(table.rows.len(), 6);
        for r in &table.rows {
            // Var θ = T/4 for curvature 2, so E[U] = T/4 and E[U(θ+s)] = T/4 + s².
            let t = r.temperature;
            assert_eq!(r.basin_probs, vec![1.0]);
            let tol = if r.method == Method::SgdMc { 0.05 } else { 1e-6 };
            assert_relative_eq!(r.e_train, t / 4.0, max_relative = tol);
            assert_relative_eq!(r.e_test, t / 4.0 + 0.01, max_relative = tol);
            assert_relative_eq!(r.shift_curv_terms[0], 0.01, max_relative = 1e-6);
            assert_eq!(r.mixing.is_some(), r.method == Method::SgdMc);
        }
        let rerun = temperature_sweep(&setup, &ts, &[Method::SgdMc]).unwrap();
        assert_eq!(rerun.rows, table.method_rows(Method::SgdMc).into_iter().cloned().collect::<Vec<_>>());

        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("T,method,E_train,E_test,p_basin_0,shift_curv_0\n"));
        assert_eq!(text.lines().count(), 7);
        let mut buf = Vec::new();
        table.write_diagnostics_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }

    #[test]
    fn two_basin_probabilities_sum_to_one() {
        let spec = BumpSpec::one_d(&[-1.0, 1.0], &[0.021, 0.1], &[0.1, 0.5], 0.001);
        let pair = make_shifted_pair(&spec, &DVector::from_element(1, 0.05)).unwrap();
        let setup = SweepSetup::new(pair, DiffusionField::ConstantScalar(1.0), Domain::cube(1, -4.0, 4.0));
        let table = temperature_sweep(&setup, &[1e-3, 0.1, 1.0], &[Method::Quadrature, Method::Laplace]).unwrap();
        for r in &table.rows {
            assert_eq!(r.basin_probs.len(), 2);
            assert_relative_eq!(r.basin_probs.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        }
        let q = table.method_rows(Method::Quadrature);
        assert!(q[0].basin_probs[0] > 0.5);
        assert!(q[2].basin_probs[1] > q[0].basin_probs[1]);
    }

    #[test]
    fn errors_carry_temperature() {
        let setup = quadratic_setup();
        assert!(temperature_sweep(&setup, &[0.0], &[Method::Quadrature]).is_err());
        let mut bad = quadratic_setup();
        bad.sgd.chains = 1;
        match temperature_sweep(&bad, &[0.02], &[Method::SgdMc]) {
            Err(Error::AtTemperature { temperature, .. }) => assert_eq!(temperature, 0.02),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()).unwrap(), m);
        }
        assert!(Method::parse("mcmc").is_err());
    }
}
