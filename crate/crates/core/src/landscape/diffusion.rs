use nalgebra::{DMatrix, DVector};

use super::Landscape;
use crate::error::{Error, Result};
use crate::linalg;

/// Scalar transform `f` in `D = I / f'(U)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossTransform {
    /// `f(u) = log u`, so `D = u`.
    Log,
    /// `f(u) = 2√u`, so `D = √u`.
    Sqrt,
    /// `f(u) = a·u`, so `D = 1/a`.
    Linear(f64),
}

impl LossTransform {
    fn check(&self, u: f64, theta: &DVector<f64>) -> Result<()> {
        let ok = match self {
            LossTransform::Log | LossTransform::Sqrt => u > 0.0 && u.is_finite(),
            LossTransform::Linear(a) => *a > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain {
                theta: theta.as_slice().to_vec(),
                detail: format!("loss value {u} outside the domain of f' for {self:?}"),
            })
        }
    }

    pub fn f(&self, u: f64) -> f64 {
        match self {
            LossTransform::Log => u.ln(),
            LossTransform::Sqrt => 2.0 * u.sqrt(),
            LossTransform::Linear(a) => a * u,
        }
    }

    pub fn fprime(&self, u: f64) -> f64 {
        match self {
            LossTransform::Log => 1.0 / u,
            LossTransform::Sqrt => 1.0 / u.sqrt(),
            LossTransform::Linear(a) => *a,
        }
    }

    /// `1/f'(u)` and its derivative in `u`.
    fn diffusivity(&self, u: f64) -> (f64, f64) {
        match self {
            LossTransform::Log => (u, 1.0),
            LossTransform::Sqrt => (u.sqrt(), 0.5 / u.sqrt()),
            LossTransform::Linear(a) => (1.0 / a, 0.0),
        }
    }
}

/// State-dependent diffusion matrix `D(θ)`.
#[derive(Debug, Clone)]
pub enum DiffusionField {
    /// `D = d·I` in whatever dimension θ has.
    ConstantScalar(f64),
    ConstantMatrix(DMatrix<f64>),
    /// `D = I / f'(base(θ))`.
    IsotropicOfLoss { transform: LossTransform, base: Landscape },
    /// `D = diag(1 / f'(U_i(θ_i)))` for 1D pieces `U_i`.
    DiagonalSeparable { potentials: Vec<Landscape>, transform: LossTransform },
    /// `D_base + β² I`.
    Augmented { base: Box<DiffusionField>, beta2: f64 },
}

impl DiffusionField {
    pub fn augmented(self, beta2: f64) -> Self {
        DiffusionField::Augmented { base: Box::new(self), beta2 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DiffusionField::ConstantScalar(d) if !(*d >= 0.0) => {
                Err(Error::Config(format!("constant diffusion {d} must be nonnegative")))
            }
            DiffusionField::ConstantMatrix(m) => {
                if m.nrows() != m.ncols() || (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
                    return Err(Error::Config("constant diffusion matrix must be square and symmetric".into()));
                }
                let lo = linalg::min_eigenvalue(m);
                if lo < -1e-12 * m.amax().max(1.0) {
                    return Err(Error::NotPositiveDefinite { what: "constant diffusion matrix".into(), min_eig: lo });
                }
                Ok(())
            }
            DiffusionField::DiagonalSeparable { potentials, .. } if potentials.iter().any(|p| p.dim() != 1) => {
                Err(Error::Config("diagonal-separable potentials must be one-dimensional".into()))
            }
            DiffusionField::Augmented { base, beta2 } => {
                if !(*beta2 >= 0.0) {
                    return Err(Error::Config(format!("beta2 = {beta2} must be nonnegative")));
                }
                base.validate()
            }
            _ => Ok(()),
        }
    }

    /// True when `D` does not depend on θ.
    pub fn is_constant(&self) -> bool {
        match self {
            DiffusionField::ConstantScalar(_) | DiffusionField::ConstantMatrix(_) => true,
            DiffusionField::IsotropicOfLoss { transform, .. } => matches!(transform, LossTransform::Linear(_)),
            DiffusionField::DiagonalSeparable { transform, .. } => matches!(transform, LossTransform::Linear(_)),
            DiffusionField::Augmented { base, .. } => base.is_constant(),
        }
    }

    /// Scalar `d` when `D = d·I` everywhere.
    pub fn constant_isotropic(&self) -> Option<f64> {
        match self {
            DiffusionField::ConstantScalar(d) => Some(*d),
            DiffusionField::IsotropicOfLoss { transform: LossTransform::Linear(a), .. } => Some(1.0 / a),
            DiffusionField::Augmented { base, beta2 } => base.constant_isotropic().map(|d| d + beta2),
            _ => None,
        }
    }

    pub fn matrix(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.eval(theta)?.0)
    }

    /// `(D(θ), ∂·D(θ))` with `(∂·D)_i = Σ_j ∂_j D_ij`.
    pub fn eval(&self, theta: &DVector<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let p = theta.len();
        match self {
            DiffusionField::ConstantScalar(d) => Ok((DMatrix::identity(p, p) * *d, DVector::zeros(p))),
            DiffusionField::ConstantMatrix(m) => {
                if m.nrows() != p {
                    return Err(Error::Config(format!("diffusion matrix is {}x{}, theta has {p}", m.nrows(), m.ncols())));
                }
                Ok((m.clone(), DVector::zeros(p)))
            }
            DiffusionField::IsotropicOfLoss { transform, base } => {
                let u = base.value(theta);
                transform.check(u, theta)?;
                let (d, dd) = transform.diffusivity(u);
                let div = if dd == 0.0 { DVector::zeros(p) } else { base.gradient(theta) * dd };
                Ok((DMatrix::identity(p, p) * d, div))
            }
            DiffusionField::DiagonalSeparable { potentials, transform } => {
                if potentials.len() != p {
                    return Err(Error::Config(format!("{} separable potentials for dimension {p}", potentials.len())));
                }
                let mut diag = DVector::zeros(p);
                let mut div = DVector::zeros(p);
                for (i, u_i) in potentials.iter().enumerate() {
                    let u = u_i.value1(theta[i]);
                    transform.check(u, theta)?;
                    let (d, dd) = transform.diffusivity(u);
                    diag[i] = d;
                    div[i] = if dd == 0.0 { 0.0 } else { dd * u_i.grad1(theta[i]) };
                }
                Ok((DMatrix::from_diagonal(&diag), div))
            }
            DiffusionField::Augmented { base, beta2 } => {
                let (mut d, div) = base.eval(theta)?;
                for i in 0..p {
                    d[(i, i)] += beta2;
                }
                Ok((d, div))
            }
        }
    }
}

/// Evaluates `(D(θ), ∂·D(θ))`.
pub fn eval_diffusion(field: &DiffusionField, theta: &DVector<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    field.eval(theta)
}
