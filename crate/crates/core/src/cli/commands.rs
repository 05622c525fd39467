use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use nalgebra::DVector;
use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::svg::{LineChart, Series};
use super::CliError;
use crate::curvature_probe::{line_curvature_theory, reflect_fit_curvature, sample_line, write_profiles_csv, Side};
use crate::diffusion_approx::{fp_evolve_1d, probability_current, FpOptions};
use crate::grid::{Domain, Grid};
use crate::landscape::DEFAULT_GRID_N;
use crate::laplace::mixture_from_potential;
use crate::oracle::{
    derive_seed, fd_check, fd_check_field, quad_expectation_checked, temperature_sweep, Method, SgdMcSettings, SweepSetup,
    SweepTable,
};
use crate::reparam::{invariance_report, Reparametrization};
use crate::sgd_sim::{run_chain_modified, write_trace_csv, ChainOptions, Histogram, ModifiedSGDConfig, SGDConfig};
use crate::steady_state::{curl_defect, effective_drift, effective_potential, steady_state_on, CURL_TOL};
use crate::testloss::{shift_records, taylor_test_at};

const FD_TOL: f64 = 1e-5;
const RICHARDSON_TOL: f64 = 1e-6;
const MASS_TOL: f64 = 1e-10;

pub(super) struct Run {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

impl Run {
    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    /// Chart output never changes the outcome of a command.
    fn chart(&self, name: &str, chart: LineChart) {
        let Some(svg) = chart.render() else {
            log::warn!("chart {name} has no finite points");
            return;
        };
        if let Err(e) = std::fs::write(self.out.join(name), svg) {
            log::warn!("could not write {name}: {e}");
        }
    }

    fn csv_rows(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(self.create(name)?);
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn sweep(&self, methods: Option<Vec<Method>>) -> Result<(), CliError> {
        let cfg = &self.cfg;
        cfg.require_1d("sweep")?;
        let pair = cfg.pair()?;
        let field = cfg.require_field(&pair.train)?;
        let domain = cfg.domain()?;
        let temps = cfg.temperatures()?;
        let methods = methods.unwrap_or_else(|| cfg.methods());
        if methods.is_empty() {
            return Err(CliError::Config("no methods selected".into()));
        }
        let mut setup = SweepSetup::new(pair.clone(), field.clone(), domain.clone());
        setup.cells = cfg.domain.cells;
        setup.sgd = match &cfg.sgd {
            Some(s) => SgdMcSettings { learning_rate: s.learning_rate, steps: s.steps, chains: s.chains, seed: cfg.seed },
            None => SgdMcSettings { seed: cfg.seed, ..SgdMcSettings::default() },
        };
        let table = temperature_sweep(&setup, &temps, &methods)?;

        for m in &methods {
            let sub = SweepTable { rows: table.method_rows(*m).into_iter().cloned().collect() };
            sub.write_csv(self.create(&format!("sweep_{}.csv", m.name()))?)?;
        }
        table.write_csv(self.create("sweep_all.csv")?)?;
        if methods.contains(&Method::SgdMc) {
            table.write_diagnostics_csv(self.create("sgd_diagnostics.csv")?)?;
        }

        let selected = match cfg.sweep.as_ref().and_then(|s| s.density_temperatures.clone()) {
            Some(t) => t,
            None => vec![temps[0], temps[temps.len() / 2], temps[temps.len() - 1]],
        };
        let grid = Grid::over(&domain, cfg.domain.cells)?;
        let xs = grid.axes[0].nodes();
        let mut density_chart = LineChart::new("Steady-state density", "theta", "rho");
        for t in &selected {
            let vpot = effective_potential(&pair.train, &field, *t, &domain).map_err(|e| e.at_temperature(*t))?;
            let v = vpot.values_on(&grid)?;
            let rho = steady_state_on(&pair.train, &field, *t, &grid).map_err(|e| e.at_temperature(*t))?;
            rho.write_csv(self.create(&format!("density_T{t:e}.csv"))?, &v)?;
            let stride = (xs.len() / 1024).max(1);
            let pts = xs.iter().zip(&rho.values).step_by(stride).map(|(x, r)| (*x, *r)).collect();
            density_chart = density_chart.with(Series::new(format!("T = {t:e}"), pts));
        }

        let mut loss_chart = LineChart::new("Expected loss", "T", "loss").log_x();
        let mut prob_chart = LineChart::new("Basin probability", "T", "p").log_x();
        for m in &methods {
            let rows = table.method_rows(*m);
            loss_chart = loss_chart
                .with(Series::new(format!("{} train", m.name()), rows.iter().map(|r| (r.temperature, r.e_train)).collect()))
                .with(Series::new(format!("{} test", m.name()), rows.iter().map(|r| (r.temperature, r.e_test)).collect()));
            for k in 0..table.basin_count() {
                prob_chart = prob_chart.with(Series::new(
                    format!("{} basin {k}", m.name()),
                    rows.iter().map(|r| (r.temperature, r.basin_probs[k])).collect(),
                ));
            }
        }
        self.chart("loss_vs_T.svg", loss_chart);
        self.chart("basin_prob_vs_T.svg", prob_chart);
        self.chart("density.svg", density_chart);
        println!("sweep: {} rows over {} temperatures written to {}", table.rows.len(), temps.len(), self.out.display());
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = &self.cfg;
        let pair = cfg.pair()?;
        let domain = cfg.domain()?;
        let field = cfg.field(&pair.train)?;
        let t0 = cfg.temperatures().map(|t| t[0]).unwrap_or(0.01);
        let mut rows: Vec<(String, f64, f64)> = vec![
            ("fd_train".into(), fd_check(&pair.train, &domain, 200, cfg.seed), FD_TOL),
            ("fd_test".into(), fd_check(&pair.test, &domain, 200, cfg.seed), FD_TOL),
        ];
        match &field {
            None => {
                let plane = Domain::cube(2, cfg.domain.lo, cfg.domain.hi);
                let defect = curl_defect(|x| Ok(DVector::from_vec(vec![-x[1], x[0]])), &plane, 17)?;
                rows.push(("curl_rotation_control".into(), defect, CURL_TOL));
            }
            Some(f) => {
                rows.push(("fd_field".into(), fd_check_field(f, &domain, 200, cfg.seed)?, FD_TOL));
                let defect = curl_defect(|x| effective_drift(&pair.train, f, t0, x), &domain, 17)?;
                rows.push(("curl_effective_drift".into(), defect, CURL_TOL));
                if cfg.dim() == 1 {
                    let grid = Grid::over(&domain, cfg.domain.cells)?;
                    for t in [t0, 10.0 * t0] {
                        let rho = steady_state_on(&pair.train, f, t, &grid).map_err(|e| e.at_temperature(t))?;
                        rows.push((format!("mass_T{t:e}"), (rho.mass() - 1.0).abs(), MASS_TOL));
                        let q = quad_expectation_checked(&pair.train, f, t, &grid, |x| pair.train.value(x))
                            .map_err(|e| e.at_temperature(t))?;
                        rows.push((format!("richardson_T{t:e}"), q.rel_change, RICHARDSON_TOL));
                    }
                }
            }
        }
        let table: Vec<Vec<String>> = rows
            .iter()
            .map(|(n, v, tol)| vec![n.clone(), v.to_string(), tol.to_string(), if *v <= *tol { "pass" } else { "FAIL" }.to_string()])
            .collect();
        self.csv_rows("validate.csv", &["check", "value", "tolerance", "status"], &table)?;
        let mut stdout = std::io::stdout().lock();
        writeln!(stdout, "{:<28} {:>14} {:>10}  status", "check", "value", "tolerance")?;
        for r in &table {
            writeln!(stdout, "{:<28} {:>14.6e} {:>10.1e}  {}", r[0], r[1].parse::<f64>().unwrap_or(f64::NAN), r[2].parse::<f64>().unwrap_or(f64::NAN), r[3])?;
        }
        let failed: Vec<&str> = rows.iter().filter(|(_, v, t)| !(*v <= *t)).map(|(n, _, _)| n.as_str()).collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(CliError::CheckFailed(failed.join(", ")))
        }
    }

    pub fn probe(&self) -> Result<(), CliError> {
        let cfg = &self.cfg;
        let pair = cfg.pair()?;
        let domain = cfg.domain()?;
        let opts = cfg.probe.clone().unwrap_or_default();
        let records = shift_records(&pair, &domain, DEFAULT_GRID_N)?;
        let mut taylor_rows = Vec::new();
        let mut fit_rows = Vec::new();
        for r in &records {
            let pred = taylor_test_at(&r.train_min, &pair, r);
            taylor_rows.push(vec![r.k.to_string(), pred.predicted.to_string(), pred.actual.to_string(), pred.gap.to_string()]);

            let a = r.train_min.clone();
            let b = if r.shift.norm() > 1e-12 {
                r.test_min.clone()
            } else {
                let mut e = a.clone();
                e[0] += opts.window;
                e
            };
            let train = sample_line(&pair.train, &a, &b, opts.points, opts.margin)?;
            let test = train.resample(&pair.test);
            write_profiles_csv(&train, &test, self.create(&format!("probe_profile_{}.csv", r.k))?)?;
            let dir = &b - &a;
            let c_train = pair.train.hessian(&r.train_min);
            for (loss, profile, r_min, c) in [("train", &train, 0.0, &c_train), ("test", &test, train.length, &r.test_hessian)] {
                let theory = line_curvature_theory(c, &dir)?;
                for (side, name) in [(Side::TowardOther, "toward"), (Side::Away, "away")] {
                    let fit = reflect_fit_curvature(profile, r_min, side, opts.window)?;
                    fit_rows.push(vec![r.k.to_string(), loss.to_string(), name.to_string(), fit.to_string(), theory.to_string()]);
                }
            }
            let pts = |p: &crate::curvature_probe::LineProfile| p.r_values.iter().copied().zip(p.losses.iter().copied()).collect();
            self.chart(
                &format!("probe_{}.svg", r.k),
                LineChart::new(&format!("Loss along the shift line, basin {}", r.k), "r", "loss")
                    .with(Series::new("train", pts(&train)))
                    .with(Series::new("test", pts(&test))),
            );
        }
        self.csv_rows("probe_taylor.csv", &["k", "predicted", "actual", "gap"], &taylor_rows)?;
        self.csv_rows("probe_fits.csv", &["k", "loss", "side", "fitted_c", "line_theory_c"], &fit_rows)?;
        for row in &taylor_rows {
            println!("basin {}: predicted {} actual {} gap {}", row[0], row[1], row[2], row[3]);
        }
        Ok(())
    }

    pub fn sgd(&self) -> Result<(), CliError> {
        let cfg = &self.cfg;
        let s = cfg.sgd.as_ref().ok_or_else(|| CliError::Config("missing [sgd] section".into()))?;
        let pair = cfg.pair()?;
        let field = cfg.require_field(&pair.train)?;
        let domain = cfg.domain()?;
        let p = cfg.dim();
        let init = match &s.init {
            Some(v) if v.len() == p => DVector::from_vec(v.clone()),
            Some(v) => return Err(CliError::Config(format!("[sgd] init has {} entries for dimension {p}", v.len()))),
            None => domain.center(),
        };
        let base = |seed: u64| -> crate::Result<SGDConfig> {
            let c = match (s.temperature, s.batch_size) {
                (Some(t), None) => SGDConfig::from_temperature(s.learning_rate, t, s.steps, seed, init.clone())?,
                (None, Some(b)) => SGDConfig::new(s.learning_rate, b, s.steps, seed, init.clone())?,
                _ => return Err(crate::Error::Config("[sgd] needs exactly one of temperature or batch_size".into())),
            };
            match s.burn_in {
                Some(b) => c.with_burn_in(b),
                None => Ok(c),
            }
        };
        if s.chains == 0 {
            return Err(CliError::Config("[sgd] chains must be positive".into()));
        }
        let opts = ChainOptions::new(cfg.domain.lo, cfg.domain.hi).with_bins(s.bins);
        let outputs = (0..s.chains)
            .into_par_iter()
            .map(|c| {
                let cfg_c = ModifiedSGDConfig::new(base(derive_seed(cfg.seed, 0, c as u64))?, s.alpha, s.beta)?;
                let o = match (c, s.trace_stride) {
                    (0, Some(k)) => opts.clone().with_trace(k),
                    _ => opts.clone(),
                };
                run_chain_modified(&pair.train, &field, &cfg_c, &o)
            })
            .collect::<crate::Result<Vec<_>>>()?;
        let temperature = base(cfg.seed)?.temperature();
        let hist = Histogram::merge(&outputs.iter().map(|o| o.histogram.clone()).collect::<Vec<_>>())?;
        hist.write_csv(self.create("sgd_histogram.csv")?)?;
        let rows: Vec<Vec<String>> = outputs
            .iter()
            .enumerate()
            .map(|(c, o)| {
                vec![
                    c.to_string(),
                    o.stats.mean.to_string(),
                    o.stats.variance().to_string(),
                    o.stationarity.mean().to_string(),
                    o.stationarity.std_error().to_string(),
                ]
            })
            .collect();
        self.csv_rows("sgd_summary.csv", &["chain", "mean", "variance", "stationarity_mean", "stationarity_se"], &rows)?;
        if let Some(trace) = outputs[0].trace.as_ref() {
            write_trace_csv(trace, self.create("sgd_trace.csv")?)?;
        }
        let centers = hist.centers();
        let mut chart = LineChart::new(&format!("SGD histogram at T = {temperature:e}"), "theta_0", "density")
            .with(Series::new("sgd", centers.iter().copied().zip(hist.density()).collect()));
        if p == 1 {
            let grid = Grid::over(&domain, cfg.domain.cells)?;
            let rho = steady_state_on(&pair.train, &field, temperature, &grid)?;
            let xs = grid.axes[0].nodes();
            let stride = (xs.len() / 1024).max(1);
            chart = chart.with(Series::new("steady state", xs.iter().zip(&rho.values).step_by(stride).map(|(x, r)| (*x, *r)).collect()));
            if s.alpha == 0.0 && s.beta == 0.0 {
                let l1 = hist.l1_to_density(|x| {
                    let i = (((x - grid.axes[0].lo) / grid.axes[0].step()).round() as usize).min(xs.len() - 1);
                    rho.values[i]
                });
                println!("sgd: L1 distance to the steady state {l1:.4}");
            }
        }
        self.chart("sgd_density.svg", chart);
        println!("sgd: {} chains at T = {temperature:e} written to {}", s.chains, self.out.display());
        Ok(())
    }

    pub fn fp(&self) -> Result<(), CliError> {
        let cfg = &self.cfg;
        cfg.require_1d("fp")?;
        let f = cfg.fp.as_ref().ok_or_else(|| CliError::Config("missing [fp] section".into()))?;
        if !(f.init_width > 0.0) {
            return Err(CliError::Config("[fp] init_width must be positive".into()));
        }
        let pair = cfg.pair()?;
        let field = cfg.require_field(&pair.train)?;
        let grid = Grid::uniform_1d(cfg.domain.lo, cfg.domain.hi, f.cells)?;
        let xs = grid.axes[0].nodes();
        let raw: Vec<f64> = xs.iter().map(|x| (-0.5 * ((x - f.init_center) / f.init_width).powi(2)).exp()).collect();
        let rho0 = crate::steady_state::GriddedDensity::from_unnormalized(grid.clone(), raw, f.temperature)?;
        let mut opts = match f.dt {
            Some(dt) => FpOptions::implicit(dt),
            None => FpOptions::default(),
        };
        opts.snapshots = f.snapshots;
        let trace = fp_evolve_1d(&pair.train, &field, f.temperature, &grid, f.t_end, &rho0.values, &opts)?;
        trace.write_csv(self.create("fp_trace.csv")?)?;
        let fin = trace.final_density(f.temperature)?;
        let steady = steady_state_on(&pair.train, &field, f.temperature, &grid)?;
        let current = probability_current(&fin, &pair.train, &field, f.temperature)?;
        let rows: Vec<Vec<String>> = (0..xs.len())
            .map(|i| vec![xs[i].to_string(), fin.values[i].to_string(), steady.values[i].to_string(), current[i].to_string()])
            .collect();
        self.csv_rows("fp_final.csv", &["theta", "rho_fp", "rho_steady", "current"], &rows)?;
        let l1 = fin.l1_distance(&steady)?;
        let pts = |v: &[f64]| xs.iter().copied().zip(v.iter().copied()).collect();
        self.chart(
            "fp.svg",
            LineChart::new(&format!("Fokker-Planck at T = {:e}", f.temperature), "theta", "rho")
                .with(Series::new("initial", pts(&rho0.values)))
                .with(Series::new(format!("t = {}", f.t_end), pts(&fin.values)))
                .with(Series::new("steady state", pts(&steady.values))),
        );
        println!("fp: L1 distance to the steady state at t = {}: {l1:.3e}", f.t_end);
        Ok(())
    }

    pub fn reparam_check(&self) -> Result<(), CliError> {
        let cfg = &self.cfg;
        cfg.require_1d("reparam-check")?;
        let r = cfg.reparam.as_ref().ok_or_else(|| CliError::Config("missing [reparam] section".into()))?;
        let pair = cfg.pair()?;
        let field = cfg.require_field(&pair.train)?;
        let domain = cfg.domain()?;
        let rep = match r.family {
            super::config::RepKind::LinearScale => Reparametrization::linear_scale(1, r.a),
            super::config::RepKind::Affine => Reparametrization::affine(nalgebra::DMatrix::from_element(1, 1, r.a), DVector::from_element(1, r.b)),
            super::config::RepKind::SmoothMonotone => Reparametrization::smooth_monotone_1d(r.eps),
        }
        .map_err(|e| CliError::Config(format!("[reparam]: {e}")))?;
        let t = r.temperature;
        let vpot = effective_potential(&pair.train, &field, t, &domain).map_err(|e| e.at_temperature(t))?;
        let mix = mixture_from_potential(&vpot, &domain, DEFAULT_GRID_N).map_err(|e| e.at_temperature(t))?;
        let report = invariance_report(&pair, &vpot, &mix, &rep, &domain)?;
        report.write_csv(self.create("reparam.csv")?)?;
        println!("reparam-check ({}):", report.rep);
        for row in &report.rows {
            println!("  {:<22} delta {:.3e}", row.term, row.delta);
        }
        Ok(())
    }
}
