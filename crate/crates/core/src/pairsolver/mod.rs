//! Coupled pair equations for two-electron ions.
//!
//! Pair functions are coefficient vectors over coupled pairs of discrete orbitals, so
//! every resolvent is diagonal. [`coulomb`] iterates the instantaneous Coulomb pair
//! equation with folds; [`photon`] adds one retarded transverse photon, either bare or
//! dressed by the Coulomb ladder on both sides.

pub mod basis;
pub mod coulomb;
pub mod kgrid;
pub mod photon;

pub use basis::{swap_phase, Exchange, OrbitalBasis, PairSpace, TwoElectronChannel};
pub use coulomb::{pair_model, pair_update, solve_coulomb_pair, CoulombIntegrals, PairFunction, PairOptions};
pub use kgrid::{make_kgrid, KGrid};
pub use photon::{
    absorb_photon, emit_photon_pair, integrate_photon_family, l_tail_estimate, one_photon_matrix_element, photon_sectors, sector_poles, Gauge, PhotonContext,
    PhotonFamily, PhotonPairFunction, Reference,
};
