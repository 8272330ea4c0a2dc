//! Density transport under divergence-free velocity fields on the periodic
//! 2D torus, with the optimal-control machinery built on top of it:
//! minimum-effort velocity selection, state transfer by penalty continuation,
//! adjoint gradient descent for the mixing objective, and the diagnostics
//! (constant speed, stationarity, Euler residual) that certify efficient
//! flows.
//!
//! The numerical substrate is pseudo-spectral: power-of-two grids, exact
//! spectral derivatives, 2/3-rule dealiasing on quadratic products, and RK4
//! time stepping. All operations are deterministic, single-threaded pure
//! functions of their inputs.

pub mod control;
pub mod error;
pub mod euler;
pub mod field;
pub mod grid;
pub mod helmholtz;
pub mod io;
pub mod metrics;
pub mod opt;
pub mod presets;
pub mod spectral;
pub mod transport;

#[cfg(test)]
pub(crate) mod test_support;

pub use control::ControlPath;
pub use error::{Error, Result};
pub use field::{ScalarField, VectorField};
pub use grid::Grid;
