//! Numerical laboratory for rotating Bose–Einstein condensates on the unit
//! disc in the Thomas–Fermi regime.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod electro;
pub mod error;
pub mod field;
pub mod geometry;
pub mod gp;
pub mod params;
pub mod quad;
pub mod sweep;
pub mod tf;
pub mod trial;
pub mod vortex;

pub use error::{Error, Result};
pub use field::{gp_energy, gp_residual, make_grid, ComplexField, EnergyBreakdown, Grid};
pub use params::{Params, Regime, RegimeConstants, RegimeTag};
pub use tf::{regularized_density, solve_tf, tf_energy_unscaled, RegularizedDensity, TfSolution};
pub use gp::{minimize, Init, MinimizeOptions, MinimizeReport};
pub use trial::{assemble_trial, build_lattice, core_radius, giant_vortex_trial, LatticeKind, TrialOptions, TrialState, VortexLattice};
