//! Photon-momentum quadrature on `[0, ∞)` with principal-value poles.

use crate::error::{Error, Result};
use crate::quad::gauss_legendre;

/// Poles closer to the origin than this are dropped: the photon vertices vanish
/// linearly in `k`, so the integrand stays regular there.
pub const MIN_POLE: f64 = 1e-9;
/// Relative distance below which a node counts as sitting on a pole.
pub const POLE_CLEARANCE: f64 = 1e-6;
const MAX_NUDGES: usize = 50;

/// `PV ∫₀^∞ χ(k)/(k_p − k) dk` for `χ = 1/(1 + ((k − k_p)/k_p)²)`, independent of `k_p`.
pub fn chi_principal_value() -> f64 {
    -0.5 * std::f64::consts::LN_2
}

#[derive(Clone, Debug)]
pub struct KGrid {
    /// Inverse Bohr, ascending.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Scale of the map `k = k₀ (1 + t)/(1 − t)` after any nudging.
    pub k0: f64,
    /// Poles kept for subtraction, ascending.
    pub poles: Vec<f64>,
}

/// Gauss–Legendre nodes in `t` mapped by `k = k₀(1+t)/(1−t)`. If a node falls on a
/// pole, `k₀` is stretched by 0.1% until all nodes clear every pole.
pub fn make_kgrid(n_nodes: usize, k0: f64, poles: &[f64]) -> Result<KGrid> {
    if n_nodes < 20 {
        return Err(Error::InvalidGrid(format!("k grid needs at least 20 nodes, got {n_nodes}")));
    }
    if !(k0 > 0.0 && k0.is_finite()) {
        return Err(Error::InvalidGrid(format!("k grid scale must be positive, got {k0}")));
    }
    let mut kept: Vec<f64> = poles.iter().copied().filter(|&p| p > MIN_POLE).collect();
    kept.sort_by(f64::total_cmp);
    let (t, wt) = gauss_legendre(n_nodes, -1.0, 1.0);
    let mut scale = k0;
    for _ in 0..=MAX_NUDGES {
        let nodes: Vec<f64> = t.iter().map(|&t| scale * (1.0 + t) / (1.0 - t)).collect();
        let clash = kept.iter().find_map(|&p| {
            nodes.iter().find(|&&k| ((k - p) / p).abs() < POLE_CLEARANCE).map(|&k| (k, p))
        });
        match clash {
            None => {
                let weights = t.iter().zip(&wt).map(|(&t, &w)| w * 2.0 * scale / (1.0 - t).powi(2)).collect();
                return Ok(KGrid { nodes, weights, k0: scale, poles: kept });
            }
            Some(_) => scale *= 1.001,
        }
    }
    let k = t.iter().map(|&t| scale * (1.0 + t) / (1.0 - t)).find(|&k| kept.iter().any(|&p| ((k - p) / p).abs() < POLE_CLEARANCE));
    Err(Error::PoleOnGrid { k: k.unwrap_or(scale), pole: kept[0] })
}

impl KGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, g: &[f64]) -> f64 {
        self.weights.iter().zip(g).map(|(w, g)| w * g).sum()
    }

    /// `PV ∫₀^∞ g(k)/(k_p − k) dk` from node samples and `g(k_p)`, by subtracting
    /// `g(k_p) χ(k)` and adding its analytic principal value back.
    pub fn principal_value(&self, pole: f64, g: &[f64], g_pole: f64) -> f64 {
        let smooth: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .zip(g)
            .map(|((&k, &w), &gk)| {
                let u = (k - pole) / pole;
                w * (gk - g_pole / (1.0 + u * u)) / (pole - k)
            })
            .sum();
        smooth + g_pole * chi_principal_value()
    }
}
