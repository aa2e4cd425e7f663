//! Simulation and estimation tools for calibrating stray electric fields on a
//! trapped ion by laser-phase interferometry.

pub mod compensation;
pub mod error;
pub mod estimators;
pub mod protocol;
pub mod pulse;
pub mod resonator;
pub mod rng;
pub mod stats;
pub mod trap;

pub use error::{Error, Result};
