//! Stabilized backward-Euler P1 finite elements for the Cahn-Hilliard
//! cross-diffusion model with phase field `phi`, nutrient `c` and chemical
//! potential `mu`.
//!
//! The crate is organised bottom-up:
//!
//! * [`mesh`]: structured triangulations, nodal interpolation, mesh transfer.
//! * [`linalg`]: CSR storage, 3x3 block systems and the direct solver.
//! * [`fem`]: quadrature, mass/stiffness/weighted-stiffness assembly, norms.
//! * [`potential`]: the (optionally truncated) double-well potential.
//! * [`stepper`]: one coupled linear solve per time step and the time loop.
//! * [`diagnostics`]: discrete energy, masses, dissipation, monitors.
//! * [`convergence`]: temporal and spatial refinement studies.
//! * [`cli_io`]: config parsing, CSV/VTK writers and the command line driver.

pub mod cli_io;
pub mod convergence;
pub mod diagnostics;
mod error;
pub mod fem;
pub mod linalg;
pub mod mesh;
pub mod potential;
pub mod stepper;

pub use error::{Error, Result};
pub use mesh::{Mesh, NodalFunction};
pub use potential::Potential;
pub use stepper::{SchemeParams, State, Stepper};
