//! Quasi-static nonlocal Navier-Stokes-Korteweg flow in periodically perforated
//! planar domains, the periodic Stokes cell problem, and the limiting nonlocal
//! Cahn-Hilliard equation with Darcy flux.
//!
//! Fields live on a uniform Cartesian grid, row-major with `idx = j * nx + i`
//! (`j` the vertical index). Velocities are face-centred (MAC layout).

pub mod cell_problem;
pub mod constitutive;
pub mod effective;
pub mod error;
pub mod extension;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod linsolve;
pub mod nonlocal;
pub mod pore;

pub use error::{Error, Result};
