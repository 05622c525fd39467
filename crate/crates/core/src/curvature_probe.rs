//! Directional curvature along the line through two minima, by reflection
//! and an anchored quadratic fit.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::landscape::Landscape;
use crate::linalg;

pub const MIN_FIT_SAMPLES: usize = 8;

/// Loss along `Θ(r) = θ_a + r·(θ_b − θ_a)/‖θ_b − θ_a‖`.
#[derive(Debug, Clone)]
pub struct LineProfile {
    pub r_values: Vec<f64>,
    pub losses: Vec<f64>,
    pub start: DVector<f64>,
    pub end: DVector<f64>,
    pub direction: DVector<f64>,
    pub length: f64,
    landscape: Landscape,
}

impl LineProfile {
    pub fn theta_at(&self, r: f64) -> DVector<f64> {
        if r == 0.0 {
            self.start.clone()
        } else if r == self.length {
            self.end.clone()
        } else {
            &self.start + &self.direction * r
        }
    }

    pub fn loss_at(&self, r: f64) -> f64 {
        self.landscape.value(&self.theta_at(r))
    }

    /// Same line and `r` grid on another landscape.
    pub fn resample(&self, other: &Landscape) -> LineProfile {
        let losses = self.r_values.iter().map(|r| other.value(&self.theta_at(*r))).collect();
        LineProfile { losses, landscape: other.clone(), ..self.clone() }
    }
}

/// Samples `n` or slightly more uniform points over `[−margin, ‖s‖ + margin]`
/// with `r = 0` and `r = ‖s‖` on the grid.
pub fn sample_line(landscape: &Landscape, a: &DVector<f64>, b: &DVector<f64>, n: usize, margin: f64) -> Result<LineProfile> {
    if n < 16 {
        return Err(Error::InvalidArgument(format!("need at least 16 samples, got {n}")));
    }
    if !(margin >= 0.0) {
        return Err(Error::InvalidArgument(format!("margin {margin} must be nonnegative")));
    }
    let diff = b - a;
    let length = diff.norm();
    if length == 0.0 {
        return Err(Error::InvalidArgument("line endpoints coincide".into()));
    }
    let inner = ((n as f64 * length / (length + 2.0 * margin)).round() as usize).max(1);
    let h = length / inner as f64;
    let pad = (margin / h).ceil() as usize;
    let r_values: Vec<f64> = (0..=inner + 2 * pad)
        .map(|k| {
            if k == pad + inner {
                length
            } else {
                (k as f64 - pad as f64) * h
            }
        })
        .collect();
    let profile = LineProfile {
        losses: Vec::new(),
        r_values,
        start: a.clone(),
        end: b.clone(),
        direction: diff / length,
        length,
        landscape: landscape.clone(),
    };
    let losses = profile.r_values.iter().map(|r| profile.loss_at(*r)).collect();
    Ok(LineProfile { losses, ..profile })
}

/// Which side of the minimum is reflected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Toward the other endpoint of the line.
    TowardOther,
    Away,
}

/// Mirrors `(r, loss)` samples about `r_min`.
pub fn reflect_about(samples: &[(f64, f64)], r_min: f64) -> Vec<(f64, f64)> {
    samples.iter().map(|(r, l)| (2.0 * r_min - r, *l)).collect()
}

/// Fits `½c·x²` (anchored at the loss at `r_min`) to the chosen side of
/// the profile and its mirror image.
pub fn reflect_fit_curvature(profile: &LineProfile, r_min: f64, side: Side, window: f64) -> Result<f64> {
    if !(window > 0.0) {
        return Err(Error::InvalidArgument(format!("window {window} must be positive")));
    }
    let toward = if r_min <= 0.5 * profile.length { 1.0 } else { -1.0 };
    let sign = match side {
        Side::TowardOther => toward,
        Side::Away => -toward,
    };
    let f0 = profile.loss_at(r_min);
    let chosen: Vec<(f64, f64)> = profile
        .r_values
        .iter()
        .zip(&profile.losses)
        .filter(|(r, _)| {
            let x = (*r - r_min) * sign;
            x > 0.0 && x <= window
        })
        .map(|(r, l)| (*r, *l))
        .collect();
    if chosen.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientSamples { found: chosen.len(), required: MIN_FIT_SAMPLES });
    }
    let mirrored = reflect_about(&chosen, r_min);
    let (mut num, mut den) = (0.0, 0.0);
    for (r, l) in chosen.iter().chain(&mirrored) {
        let x2 = (r - r_min).powi(2);
        num += (l - f0) * x2;
        den += x2 * x2;
    }
    Ok((2.0 * num / den).max(0.0))
}

/// `sᵀCs/‖s‖²`.
pub fn line_curvature_theory(c: &DMatrix<f64>, s: &DVector<f64>) -> Result<f64> {
    let n2 = s.norm_squared();
    if n2 == 0.0 {
        return Err(Error::InvalidArgument("zero shift has no direction".into()));
    }
    Ok(linalg::quad_form(c, s) / n2)
}

/// Writes `r,loss_train,loss_test`.
pub fn write_profiles_csv<W: Write>(train: &LineProfile, test: &LineProfile, out: W) -> Result<()> {
    if train.r_values != test.r_values {
        return Err(Error::GridMismatch("train and test profiles use different r grids".into()));
    }
    let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["r", "loss_train", "loss_test"]).map_err(io)?;
    for ((r, a), b) in train.r_values.iter().zip(&train.losses).zip(&test.losses) {
        w.write_record([r.to_string(), a.to_string(), b.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    Ok(())
}
