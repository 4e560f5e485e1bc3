//! Numerical laboratory for minimal-mass blow-up of the mass-critical NLS
//! perturbed by a subcritical power.

pub mod banded;
pub mod error;
pub mod evolution;
pub mod groundstate;
pub mod lab;
pub mod law;
pub mod modulation;
pub mod profile;
pub mod radial;

pub use error::{Error, Result};
