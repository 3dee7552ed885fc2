// SPDX-License-Identifier: Apache-2.0

//! Zero-field ODMR of NV⁻ ensembles in diamond under the NV⁻–N⁺ pair model.
//!
//! The crate covers the whole chain from random defect configurations to
//! ensemble spectra:
//!
//! * [`lattice`] places NV centers and nitrogen atoms in a sphere and pairs
//!   every NV with its nearest nitrogen donor,
//! * [`efield`] sums the Coulomb fields of the resulting charges and converts
//!   them into spin couplings,
//! * [`spin`] diagonalizes the ground-state Hamiltonian,
//! * [`spectra`] accumulates Monte Carlo resonance histograms and applies
//!   microwave broadening and light narrowing,
//! * [`analytics`] holds the closed-form nearest-neighbor and lineshape laws,
//! * [`charge`] solves the seven-level NV⁻/NV⁰ Lindblad model,
//! * [`fitting`] fits ODMR spectra and estimates magnetic sensitivity,
//! * [`pipeline`] ties everything into sweeps that emit CSV/JSON.
//!
//! Closed-form code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the Monte Carlo and solvers use.

// `!(x > 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod charge;
pub mod config;
pub mod efield;
pub mod error;
pub mod fitting;
pub mod geometry;
pub mod io;
pub mod lattice;
pub mod pipeline;
pub mod quadrature;
pub mod rng;
pub mod scalar;
pub mod spectra;
pub mod spin;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Vector3 = geometry::Vec3<f64>;
pub type PhysicalConstants = efield::PhysicalConstants<f64>;
pub type FieldVector = efield::FieldVector<f64>;
pub type CouplingVector = efield::CouplingVector<f64>;
pub type SpinModelParams = spin::SpinModelParams<f64>;
pub type ResonanceSet = spin::ResonanceSet<f64>;
pub type AnalyticParams = analytics::AnalyticParams<f64>;

pub type PhysicalConstantsF32 = efield::PhysicalConstants<f32>;
pub type SpinModelParamsF32 = spin::SpinModelParams<f32>;
pub type AnalyticParamsF32 = analytics::AnalyticParams<f32>;

pub use charge::{DensityMatrix, LevelSystem};
pub use config::RunConfig;
pub use fitting::{OdmrFitModel, OdmrFitResult};
pub use lattice::{DefectConfiguration, LatticeSpec};
pub use spectra::{BroadeningParams, NarrowingModel, SpectrumHistogram};
