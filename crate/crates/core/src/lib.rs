//! Kinetically constrained lattice gas toolkit: the Kob-Andersen model on
//! tori and finite windows, with event-driven simulation, bootstrap
//! percolation analysis, diffusion coefficient estimators, hydrodynamic
//! profile comparison, and non-gradient structure probes.

pub mod bootstrap;
pub mod diffusion;
pub mod dynamics;
pub mod error;
pub mod hydro;
pub mod lattice;
pub mod nongradient;
pub mod rng;

pub use error::{KaError, Result};
pub use lattice::{Configuration, DensityProfile, Edge, Geometry, Site, TorusGeometry, Window};
