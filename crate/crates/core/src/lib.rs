//! Relativistic many-body perturbation theory merged with single retarded photon
//! exchange for two-electron ions.
//!
//! The crate is organised bottom-up: [`diffcalc`] and [`modelspace`] hold the fold
//! algebra, [`radial`] and [`angular`] the one-electron substrate, [`pairsolver`] the
//! Coulomb and photonic pair equations, and [`cli_report`] the batch driver.

pub mod angular;
pub mod cli_report;
pub mod constants;
pub mod diffcalc;
pub mod error;
pub mod modelspace;
pub mod pairsolver;
pub mod quad;
pub mod radial;

pub use error::{Error, Result};
