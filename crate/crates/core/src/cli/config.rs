//! TOML experiment configuration.

use std::path::Path;

use nalgebra::DVector;
use serde::Deserialize;

use crate::grid::Domain;
use crate::landscape::{build_landscape, sample_shift, BumpSpec, DiffusionField, Landscape, LossTransform, TrainTestPair};
use crate::oracle::{log_spaced, Method};

use super::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub landscape: LandscapeSection,
    pub shift: Option<ShiftSection>,
    #[serde(default)]
    pub diffusion: DiffusionSection,
    #[serde(default)]
    pub domain: DomainSection,
    pub temperature: Option<TemperatureSection>,
    pub sweep: Option<SweepSection>,
    pub sgd: Option<SgdSection>,
    pub fp: Option<FpSection>,
    pub probe: Option<ProbeSection>,
    pub reparam: Option<ReparamSection>,
    pub output: Option<OutputSection>,
}

/// Flat list for 1D minima or nested lists for several dimensions.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Points {
    Flat(Vec<f64>),
    Nested(Vec<Vec<f64>>),
}

impl Points {
    fn rows(&self) -> Vec<Vec<f64>> {
        match self {
            Points::Flat(v) => v.iter().map(|x| vec![*x]).collect(),
            Points::Nested(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum LandscapeKind {
    Bumps,
    Quadratic,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeSection {
    #[serde(default = "default_kind")]
    pub kind: LandscapeKind,
    pub minima: Option<Points>,
    pub weights: Option<Vec<f64>>,
    pub sigmas: Option<Vec<f64>>,
    /// Confinement coefficient.
    pub c: Option<f64>,
    #[serde(default = "one")]
    pub lscale: f64,
    #[serde(default)]
    pub wscale: f64,
    pub center: Option<f64>,
    pub curvature: Option<f64>,
}

fn default_kind() -> LandscapeKind {
    LandscapeKind::Bumps
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftSection {
    /// Standard deviation of a Gaussian shift drawn from the seed.
    pub stddev_shift: Option<f64>,
    /// Explicit shift vector.
    pub value: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum DiffusionKind {
    Constant,
    IsotropicOfLoss,
    /// Curl-carrying control for `validate` only.
    Rotation,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSection {
    pub kind: DiffusionKind,
    #[serde(default = "one")]
    pub d: f64,
    pub transform: Option<String>,
    /// Slope of the linear transform.
    pub a: Option<f64>,
    #[serde(default)]
    pub beta2: f64,
}

impl Default for DiffusionSection {
    fn default() -> Self {
        Self { kind: DiffusionKind::Constant, d: 1.0, transform: None, a: None, beta2: 0.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    #[serde(default = "lo")]
    pub lo: f64,
    #[serde(default = "hi")]
    pub hi: f64,
    #[serde(default = "cells")]
    pub cells: usize,
}

fn lo() -> f64 {
    -4.0
}
fn hi() -> f64 {
    4.0
}
fn cells() -> usize {
    16384
}

impl Default for DomainSection {
    fn default() -> Self {
        Self { lo: lo(), hi: hi(), cells: cells() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureSection {
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub points: Option<usize>,
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub methods: Option<Vec<String>>,
    /// Temperatures at which densities are exported.
    pub density_temperatures: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdSection {
    #[serde(default = "sgd_lr")]
    pub learning_rate: f64,
    pub batch_size: Option<f64>,
    pub temperature: Option<f64>,
    #[serde(default = "sgd_steps")]
    pub steps: u64,
    pub burn_in: Option<u64>,
    #[serde(default = "sgd_chains")]
    pub chains: usize,
    pub init: Option<Vec<f64>>,
    #[serde(default = "sgd_bins")]
    pub bins: usize,
    pub trace_stride: Option<u64>,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
}

fn sgd_lr() -> f64 {
    1e-4
}
fn sgd_steps() -> u64 {
    200_000
}
fn sgd_chains() -> usize {
    8
}
fn sgd_bins() -> usize {
    128
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpSection {
    pub temperature: f64,
    pub t_end: f64,
    /// Implicit steps of this size; explicit with an automatic step otherwise.
    pub dt: Option<f64>,
    #[serde(default = "fp_cells")]
    pub cells: usize,
    #[serde(default)]
    pub init_center: f64,
    #[serde(default = "fp_width")]
    pub init_width: f64,
    #[serde(default = "fp_snapshots")]
    pub snapshots: usize,
}

fn fp_cells() -> usize {
    crate::diffusion_approx::DEFAULT_FP_CELLS
}
fn fp_width() -> f64 {
    0.3
}
fn fp_snapshots() -> usize {
    10
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    #[serde(default = "probe_points")]
    pub points: usize,
    #[serde(default = "probe_margin")]
    pub margin: f64,
    #[serde(default = "probe_window")]
    pub window: f64,
}

fn probe_points() -> usize {
    401
}
fn probe_margin() -> f64 {
    0.1
}
fn probe_window() -> f64 {
    0.05
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self { points: probe_points(), margin: probe_margin(), window: probe_window() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum RepKind {
    LinearScale,
    Affine,
    SmoothMonotone,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReparamSection {
    pub family: RepKind,
    #[serde(default = "one")]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default = "rep_eps")]
    pub eps: f64,
    pub temperature: f64,
}

fn rep_eps() -> f64 {
    0.2
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => bad(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn check(&self) -> Result<(), CliError> {
        let d = &self.domain;
        if !(d.lo < d.hi) || d.cells < 2 {
            return Err(bad("[domain] needs lo < hi and at least 2 cells"));
        }
        if let Some(t) = &self.temperature {
            self.temperatures_from(t)?;
        }
        if let Some(s) = &self.sweep {
            for m in s.methods.iter().flatten() {
                Method::parse(m).map_err(|e| bad(format!("[sweep] methods: {e}")))?;
            }
        }
        if let Some(sh) = &self.shift {
            if sh.stddev_shift.is_some() == sh.value.is_some() {
                return Err(bad("[shift] needs exactly one of stddev_shift or value"));
            }
        }
        Ok(())
    }

    fn temperatures_from(&self, t: &TemperatureSection) -> Result<Vec<f64>, CliError> {
        let grid = match (&t.values, t.min, t.max, t.points) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(lo), Some(hi), Some(n)) => {
                if n == 0 {
                    Vec::new()
                } else {
                    log_spaced(lo, hi, n).map_err(|e| bad(format!("[temperature]: {e}")))?
                }
            }
            _ => return Err(bad("[temperature] needs either values or min, max and points")),
        };
        if grid.is_empty() {
            return Err(bad("[temperature] grid is empty"));
        }
        if grid.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(bad("[temperature] values must be positive"));
        }
        Ok(grid)
    }

    pub fn temperatures(&self) -> Result<Vec<f64>, CliError> {
        let t = self.temperature.as_ref().ok_or_else(|| bad("missing [temperature] section"))?;
        self.temperatures_from(t)
    }

    pub fn methods(&self) -> Vec<Method> {
        match self.sweep.as_ref().and_then(|s| s.methods.as_ref()) {
            Some(m) => m.iter().map(|x| Method::parse(x).expect("checked")).collect(),
            None => vec![Method::Quadrature, Method::Laplace],
        }
    }

    pub fn dim(&self) -> usize {
        match (&self.landscape.kind, &self.landscape.minima) {
            (LandscapeKind::Bumps, Some(m)) => m.rows().first().map_or(1, |r| r.len()),
            _ => 1,
        }
    }

    pub fn domain(&self) -> Result<Domain, CliError> {
        Ok(Domain::cube(self.dim(), self.domain.lo, self.domain.hi))
    }

    pub fn train(&self) -> Result<Landscape, CliError> {
        let l = &self.landscape;
        match l.kind {
            LandscapeKind::Bumps => {
                let need = |name: &str| bad(format!("[landscape] bumps need `{name}`"));
                let spec = BumpSpec {
                    minima: l.minima.as_ref().ok_or_else(|| need("minima"))?.rows(),
                    weights: l.weights.clone().ok_or_else(|| need("weights"))?,
                    sigmas: l.sigmas.clone().ok_or_else(|| need("sigmas"))?,
                    confinement: l.c.ok_or_else(|| need("c"))?,
                    loss_scale: l.lscale,
                    weight_perturb: l.wscale,
                    seed: self.seed,
                };
                build_landscape(&spec).map_err(|e| bad(format!("[landscape]: {e}")))
            }
            LandscapeKind::Quadratic => {
                let c = l.curvature.ok_or_else(|| bad("[landscape] quadratic needs `curvature`"))?;
                if !(c > 0.0) {
                    return Err(bad("[landscape] curvature must be positive"));
                }
                Ok(Landscape::quadratic_1d(l.center.unwrap_or(0.0), c * l.lscale, 0.0))
            }
        }
    }

    /// Shift vector; zero when there is no `[shift]` section.
    pub fn shift(&self) -> Result<DVector<f64>, CliError> {
        let p = self.dim();
        match &self.shift {
            None => Ok(DVector::zeros(p)),
            Some(ShiftSection { stddev_shift: Some(sd), .. }) => {
                if !(*sd >= 0.0) {
                    return Err(bad("[shift] stddev_shift must be nonnegative"));
                }
                Ok(sample_shift(p, *sd, self.seed))
            }
            Some(ShiftSection { value: Some(v), .. }) => {
                if v.len() != p {
                    return Err(bad(format!("[shift] value has {} entries for dimension {p}", v.len())));
                }
                Ok(DVector::from_vec(v.clone()))
            }
            Some(_) => Err(bad("[shift] needs exactly one of stddev_shift or value")),
        }
    }

    pub fn pair(&self) -> Result<TrainTestPair, CliError> {
        TrainTestPair::from_train(self.train()?, &self.shift()?).map_err(|e| bad(e.to_string()))
    }

    /// The diffusion field, or `None` for the rotation control.
    pub fn field(&self, train: &Landscape) -> Result<Option<DiffusionField>, CliError> {
        let d = &self.diffusion;
        let field = match d.kind {
            DiffusionKind::Rotation => return Ok(None),
            DiffusionKind::Constant => DiffusionField::ConstantScalar(d.d),
            DiffusionKind::IsotropicOfLoss => {
                let transform = match d.transform.as_deref() {
                    Some("log") | None => LossTransform::Log,
                    Some("sqrt") => LossTransform::Sqrt,
                    Some("linear") => LossTransform::Linear(d.a.unwrap_or(1.0)),
                    Some(other) => return Err(bad(format!("[diffusion] unknown transform `{other}`"))),
                };
                DiffusionField::IsotropicOfLoss { transform, base: train.clone() }
            }
        };
        let field = if d.beta2 > 0.0 { field.augmented(d.beta2) } else { field };
        field.validate().map_err(|e| bad(format!("[diffusion]: {e}")))?;
        Ok(Some(field))
    }

    pub fn require_field(&self, train: &Landscape) -> Result<DiffusionField, CliError> {
        self.field(train)?.ok_or_else(|| bad("the rotation control is only meaningful for `validate`"))
    }

    pub fn require_1d(&self, what: &str) -> Result<(), CliError> {
        if self.dim() != 1 {
            return Err(bad(format!("`{what}` needs a one-dimensional landscape")));
        }
        Ok(())
    }
}
