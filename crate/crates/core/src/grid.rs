//! Uniform tensor-product grids and domain boxes.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::quad::trapezoid_weights;

/// Axis-aligned box `[lo_i, hi_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Domain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Config("domain bounds must have equal nonzero length".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::Config(format!("domain lower bounds {lo:?} must be below upper bounds {hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    /// The cube `[lo, hi]^p`.
    pub fn cube(p: usize, lo: f64, hi: f64) -> Self {
        Self { lo: vec![lo; p], hi: vec![hi; p] }
    }

    /// Default landscape domain `[-4, 4]^p`.
    pub fn default_for(p: usize) -> Self {
        Self::cube(p, -4.0, 4.0)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn center(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)))
    }

    pub fn contains(&self, theta: &DVector<f64>) -> bool {
        theta.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (a, b))| *x >= *a && *x <= *b)
    }
}

/// Uniform grid with `cells` intervals on `[lo, hi]` (so `cells + 1` nodes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        if !(lo < hi) || cells < 2 {
            return Err(Error::InvalidArgument(format!("axis [{lo}, {hi}] with {cells} cells")));
        }
        Ok(Self { lo, hi, cells })
    }

    pub fn len(&self) -> usize {
        self.cells + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / self.cells as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.cells {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    pub fn refined(&self) -> Self {
        Self { cells: 2 * self.cells, ..*self }
    }
}

/// Tensor-product grid; values are stored row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub axes: Vec<Axis>,
}

impl Grid {
    pub fn new(axes: Vec<Axis>) -> Self {
        Self { axes }
    }

    pub fn uniform_1d(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        Ok(Self { axes: vec![Axis::new(lo, hi, cells)?] })
    }

    pub fn over(domain: &Domain, cells: usize) -> Result<Self> {
        let axes = domain
            .lo
            .iter()
            .zip(&domain.hi)
            .map(|(a, b)| Axis::new(*a, *b, cells))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { axes })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Axis::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn refined(&self) -> Self {
        Self { axes: self.axes.iter().map(Axis::refined).collect() }
    }

    /// Multi-index of flat index `idx`.
    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for (d, ax) in self.axes.iter().enumerate().rev() {
            out[d] = idx % ax.len();
            idx /= ax.len();
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for (ax, m) in self.axes.iter().zip(multi) {
            idx = idx * ax.len() + m;
        }
        idx
    }

    /// Flat-index stride of axis `d`.
    pub fn stride(&self, d: usize) -> usize {
        self.axes[d + 1..].iter().map(Axis::len).product()
    }

    pub fn point(&self, idx: usize) -> DVector<f64> {
        let m = self.multi_index(idx);
        DVector::from_iterator(self.dim(), self.axes.iter().zip(&m).map(|(ax, i)| ax.node(*i)))
    }

    pub fn points(&self) -> Vec<DVector<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Product trapezoid weights.
    pub fn weights(&self) -> Vec<f64> {
        let per_axis: Vec<Vec<f64>> = self.axes.iter().map(|a| trapezoid_weights(a.len(), a.step())).collect();
        (0..self.len())
            .map(|idx| {
                self.multi_index(idx).iter().zip(&per_axis).map(|(i, w)| w[*i]).product()
            })
            .collect()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights().iter().zip(values).map(|(w, v)| w * v).sum()
    }

    pub fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", self.axes, other.axes)));
        }
        Ok(())
    }
}
