//! Numerical laboratory for SGD steady states on synthetic loss landscapes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod curvature_probe;
pub mod diffusion_approx;
pub mod error;
pub mod grid;
pub mod landscape;
pub mod laplace;
pub mod linalg;
pub mod oracle;
pub mod quad;
pub mod reparam;
pub mod sgd_sim;
pub mod steady_state;
pub mod testloss;

pub use error::{Error, Result};
