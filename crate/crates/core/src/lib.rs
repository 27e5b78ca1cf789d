//! Simulation and verification toolkit for the nonlocal Cahn-Hilliard equation
//! on bounded boxes.
//!
//! The crate is organized bottom-up:
//!
//! * [`grid`] and [`spectral`]: cell-centered grids, Neumann operators and
//!   their DCT diagonalization.
//! * [`kernels`]: interaction kernels and truncated-domain convolution.
//! * [`potentials`]: double-well, logarithmic and entropy free energies.
//! * [`dynamics`]: time stepping of the four model variants.
//! * [`analysis`]: energy, dissipation, separation and contraction diagnostics.
//! * [`stationary`]: mass-constrained equilibrium solvers.
//! * [`reference`]: brute-force reference implementations used as oracles.

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod kernels;
mod linalg;
pub mod potentials;
pub mod reference;
pub mod spectral;
pub mod stationary;

pub use error::{Error, Result};
pub use analysis::{RunStatus, Snapshot, Trajectory};
pub use dynamics::{init_state, pde_residual, run, ModelConfig, Mobility, SimState, StepDiagnostics, Variant};
pub use grid::{Field, FieldTag, Grid, VectorField};
pub use kernels::{Kernel, KernelProfile, KernelSpec, RadialTable};
pub use potentials::{Potential, PotentialTable};
pub use stationary::{degenerate_equilibrium, solve_stationary, ChemicalPotentialForm, StationaryResult};
