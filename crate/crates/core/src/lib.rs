//! Population-density and Monte Carlo solvers for three views of a stochastic
//! neuron: the noisy leaky integrate-and-fire process with reset, the
//! escape-rate (age-structured) process, and the joint age-potential process
//! whose marginals reproduce the other two.
//!
//! * [`mc`] simulates the stochastic processes trial by trial.
//! * [`fp1d`] solves the Fokker-Planck equation in potential with reinjection.
//! * [`as1d`] solves the age-structured transport equation with a hazard.
//! * [`fpt`] solves the first-passage problem that yields ISI densities,
//!   survivor functions and hazards.
//! * [`joint2d`] evolves the joint density and builds the marginal,
//!   stationary and product-form constructions linking the models.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod as1d;
pub mod density;
pub mod error;
pub mod fp1d;
pub mod fpt;
pub mod grid;
pub mod hazard;
pub mod joint2d;
pub mod mc;
pub mod operator;
pub mod series;
mod slices;
pub mod stimulus;

pub use density::{deposit_delta, mass, DeltaDeposit, DensityAge, DensityField1D, DensityJoint};
pub use error::{Error, Result};
pub use grid::{AgeGrid, PotentialGrid};
pub use hazard::{survivor_from_hazard, ConstantHazard, EscapeHazard, HazardRate, HazardTable};
pub use series::{compare_series, Discrepancy, FiringRateSeries};
pub use stimulus::{Drive, Stimulus};

/// Tolerance on total probability for fields that represent a pdf.
pub const MASS_TOLERANCE: f64 = 1e-6;

/// Survivor / age-mass level below which hazard ratios are not trusted.
pub const SURVIVOR_FLOOR: f64 = 1e-10;

/// Largest mass tolerated in the last age cell before the age domain is
/// considered too short.
pub const AGE_TRUNCATION_TOLERANCE: f64 = 1e-8;
