//! Floquet Majorana superlattice simulator.
//!
//! Free-fermion (Gaussian) simulation of a periodically driven p-wave
//! superconducting superlattice that hosts Majorana zero and π edge modes:
//! invariants, edge modes, braiding schedules, logical gates and readout.

pub mod error;
pub mod evolve;
pub mod fockoracle;
pub mod gaussian;
pub mod lattice;
pub mod linalg;
pub mod logic;
pub mod protocols;
pub mod topology;

pub use error::{Error, Result};
