use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::landscape::{DiffusionField, Landscape};
use crate::steady_state::{steady_state_on, GriddedDensity};

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0) || !(hi > lo) || n < 2 {
        return Err(Error::InvalidArgument(format!("bad log grid [{lo}, {hi}] with {n} points")));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect())
}

/// Trapezoid `∫ f ρ` for nodal values `f`.
pub fn quad_expectation(rho: &GriddedDensity, f: &[f64]) -> Result<f64> {
    rho.expect_values(f)
}

/// An expectation and its change under grid doubling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadCheck {
    pub value: f64,
    pub refined: f64,
    pub rel_change: f64,
}

/// `E_ρ[f]` on `grid` and on the doubled grid.
pub fn quad_expectation_checked<F>(landscape: &Landscape, field: &DiffusionField, temperature: f64, grid: &Grid, f: F) -> Result<QuadCheck>
where
    F: Fn(&nalgebra::DVector<f64>) -> f64,
{
    let eval = |g: &Grid| -> Result<f64> {
        let rho = steady_state_on(landscape, field, temperature, g)?;
        Ok(rho.expect(&f))
    };
    let value = eval(grid)?;
    let refined = eval(&grid.refined())?;
    Ok(QuadCheck { value, refined, rel_change: (refined - value).abs() / refined.abs().max(f64::MIN_POSITIVE) })
}

/// Node indices of strict interior local maxima of `potential`.
pub fn basin_boundaries(potential: &[f64]) -> Vec<usize> {
    let n = potential.len();
    (1..n.saturating_sub(1)).filter(|&i| potential[i] > potential[i - 1] && potential[i] >= potential[i + 1]).collect()
}

fn count_minima(potential: &[f64]) -> usize {
    let n = potential.len();
    (1..n.saturating_sub(1)).filter(|&i| potential[i] < potential[i - 1] && potential[i] <= potential[i + 1]).count()
}

/// Index of the basin containing coordinate `x`, given boundary coordinates.
pub fn basin_of(x: f64, boundaries: &[f64]) -> usize {
    boundaries.partition_point(|b| *b <= x)
}

/// Mass of `ρ` between consecutive interior maxima of `potential` (domain
/// ends as outer boundaries).
pub fn basin_masses(rho: &GriddedDensity, potential: &[f64]) -> Result<Vec<f64>> {
    if rho.grid.dim() != 1 {
        return Err(Error::InvalidArgument("basin masses are one-dimensional".into()));
    }
    if potential.len() != rho.values.len() {
        return Err(Error::GridMismatch(format!("{} potential values for {} nodes", potential.len(), rho.values.len())));
    }
    let cuts = basin_boundaries(potential);
    if cuts.is_empty() && count_minima(potential) >= 2 {
        return Err(Error::InvalidArgument("potential has several minima but no interior maximum".into()));
    }
    let h = rho.grid.axes[0].step();
    let mut edges = vec![0];
    edges.extend(cuts);
    edges.push(rho.values.len() - 1);
    let mut masses: Vec<f64> = edges
        .windows(2)
        .map(|w| (w[0]..w[1]).map(|i| 0.5 * h * (rho.values[i] + rho.values[i + 1])).sum())
        .collect();
    let total: f64 = masses.iter().sum();
    masses.iter_mut().for_each(|m| *m /= total);
    Ok(masses)
}
