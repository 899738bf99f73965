//! Physical constants and unit conversions (atomic units).

/// Speed of light, inverse fine-structure constant.
pub const C_AU: f64 = 137.035999;

/// Hartree to microhartree.
pub const UH_PER_HARTREE: f64 = 1e6;
