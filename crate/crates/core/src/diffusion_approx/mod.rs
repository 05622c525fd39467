//! Moment/cumulant bookkeeping for increment processes and a 1D
//! Fokker-Planck solver.

mod cumulants;
mod fokker_planck;

pub use cumulants::{cumulants_from_moments, increment_matching_error, moments_from_cumulants, sample_cumulants, CumulantSet, MAX_ORDER};
pub use fokker_planck::{fp_evolve_1d, probability_current, DensityTrace, FpOptions, TimeScheme, DEFAULT_FP_CELLS};
