//! Spectral Galerkin simulation of a stochastic Cahn–Hilliard / convective
//! Brinkman–Forchheimer tumor-growth model on the periodic box, with the
//! checks needed to trust it: operator identities, energy bookkeeping,
//! projection inequalities and shared-noise convergence studies.
//!
//! The crate is layered bottom-up:
//! [`basis`] → [`transforms`] → [`potentials`] / [`operators`] / [`noise`]
//! → [`stepper`] → [`diagnostics`] → [`harness`].

pub mod basis;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod noise;
pub mod operators;
pub mod parallel;
pub mod potentials;
pub mod snapshot;
pub mod stepper;
pub mod transforms;

pub use basis::{BasisKind, DomainSpec, ModeOrdering, ScalarField, VectorField, WaveVector};
pub use error::{BasisError, HarnessError, NoiseError, PotentialError, StepError};
pub use num_complex::Complex64;
