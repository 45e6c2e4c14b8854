//! Conformal-welding solvers for tori and cylinders, Schwarzian action integrals,
//! Virasoro characters, and the generating function lnPsi_t(lambda) of heat transferred
//! across a smooth temperature step in a chiral-split CFT.

pub mod analysis;
pub mod characters;
#[cfg(feature = "cli")]
pub mod cli;
pub mod cylinder_weld;
pub mod error;
pub mod fcs;
pub mod linalg;
pub mod ode;
pub mod profile;
pub mod quad;
pub mod spectral;
pub mod torus_weld;

pub use error::{Error, Result};
