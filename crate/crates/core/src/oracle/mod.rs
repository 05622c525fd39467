//! Brute-force references: quadrature expectations, basin masses,
//! derivative checks and the temperature sweep.

mod fdcheck;
mod quadrature;
mod sweep;

pub use fdcheck::{fd_check, fd_check_field};
pub use quadrature::{basin_boundaries, basin_masses, basin_of, log_spaced, quad_expectation, quad_expectation_checked, QuadCheck};
pub use sweep::{derive_seed, temperature_sweep, Method, MixingDiagnostic, SgdMcSettings, SweepRow, SweepSetup, SweepTable};
