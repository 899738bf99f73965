//! Orbital sets and coupled two-electron pair spaces.

use std::collections::HashMap;
use std::sync::Mutex;

use nalgebra::DMatrix;

use crate::angular::{parity_sign, triangle, wigner_6j};
use crate::error::{Error, Result};
use crate::radial::{kappa_l, Orbital, RadialGrid, SpectrumSet};

/// Positive-energy orbitals used to expand pair functions. Positions in `orbitals`
/// are the indices used by every pair space built on this set.
#[derive(Clone, Debug)]
pub struct OrbitalBasis {
    pub orbitals: Vec<Orbital>,
    pub grid: RadialGrid,
    pub c: f64,
}

impl OrbitalBasis {
    /// Lowest `n_per_kappa` positive-energy states of each κ in `kappas`.
    pub fn from_spectrum(spectrum: &SpectrumSet, kappas: &[i32], n_per_kappa: usize) -> Result<Self> {
        let mut orbitals = Vec::new();
        for &kappa in kappas {
            let block: Vec<Orbital> = spectrum.positive(kappa).take(n_per_kappa).cloned().collect();
            if block.len() < n_per_kappa {
                return Err(Error::InvalidModel(format!(
                    "kappa {kappa}: {} positive states available, {n_per_kappa} requested",
                    block.len()
                )));
            }
            orbitals.extend(block);
        }
        Ok(OrbitalBasis { orbitals, grid: spectrum.grid.clone(), c: spectrum.c })
    }

    pub fn len(&self) -> usize {
        self.orbitals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orbitals.is_empty()
    }

    /// Position of the bound state `n κ`.
    pub fn find(&self, n_principal: u32, kappa: i32) -> Option<usize> {
        let first = kappa_l(kappa) + 1;
        if n_principal < first {
            return None;
        }
        self.orbitals.iter().enumerate().filter(|(_, o)| o.kappa == kappa).map(|(i, _)| i).nth((n_principal - first) as usize)
    }

    pub fn energy(&self, p: usize) -> f64 {
        self.orbitals[p].energy
    }

    pub fn two_j(&self, p: usize) -> u32 {
        self.orbitals[p].two_j()
    }

    pub fn kappas(&self) -> Vec<i32> {
        let mut out: Vec<i32> = self.orbitals.iter().map(|o| o.kappa).collect();
        out.dedup();
        out
    }
}

/// Behaviour of coupled pair states under electron exchange.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Exchange {
    Symmetric,
    Antisymmetric,
}

impl Exchange {
    pub fn sign(self) -> f64 {
        match self {
            Exchange::Symmetric => 1.0,
            Exchange::Antisymmetric => -1.0,
        }
    }
}

/// Coupled symmetry block `(κ₁, κ₂) J` with its exchange behaviour.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TwoElectronChannel {
    pub kappa1: i32,
    pub kappa2: i32,
    pub big_j: u32,
    pub exchange: Exchange,
}

impl TwoElectronChannel {
    pub fn new(kappa1: i32, kappa2: i32, big_j: u32, exchange: Exchange) -> Result<Self> {
        let (a, b) = (crate::radial::kappa_two_j(kappa1), crate::radial::kappa_two_j(kappa2));
        if !triangle(a, b, 2 * big_j) {
            return Err(Error::InvalidModel(format!("J = {big_j} not reachable from kappas {kappa1}, {kappa2}")));
        }
        Ok(TwoElectronChannel { kappa1, kappa2, big_j, exchange })
    }

    /// Spectroscopic label of the 1s2s-type terms: `1S` for J = 0, `3S` for J = 1.
    pub fn term_label(&self) -> String {
        match (self.big_j, self.exchange) {
            (0, Exchange::Antisymmetric) => "1S".into(),
            (1, Exchange::Antisymmetric) => "3S".into(),
            (j, _) => format!("J={j}"),
        }
    }
}

/// Phase `(-1)^{j_r + j_s - J}` of `P₁₂ |(r s) J⟩ = phase |(s r) J⟩`.
pub fn swap_phase(basis: &OrbitalBasis, r: usize, s: usize, big_j: u32) -> f64 {
    parity_sign((basis.two_j(r) + basis.two_j(s)) as i64 / 2 - big_j as i64)
}

/// Memoized 6j symbols (doubled arguments); the exact evaluation is too slow for
/// inner loops.
#[derive(Default)]
pub struct SixJCache(Mutex<HashMap<[u32; 6], f64>>);

impl SixJCache {
    pub fn sixj(&self, a: u32, b: u32, c: u32, d: u32, e: u32, f: u32) -> f64 {
        let key = [a, b, c, d, e, f];
        if let Some(&v) = self.0.lock().expect("6j cache poisoned").get(&key) {
            return v;
        }
        let v = wigner_6j(a, b, c, d, e, f);
        self.0.lock().expect("6j cache poisoned").insert(key, v);
        v
    }

    /// Cached [`crate::angular::two_electron_factor`].
    pub fn two_electron(&self, tja: u32, tjb: u32, tjc: u32, tjd: u32, two_big_j: u32, rank: u32) -> f64 {
        parity_sign(((tjb + tjc + two_big_j) / 2) as i64) * self.sixj(tja, tjb, two_big_j, tjd, tjc, 2 * rank)
    }
}

/// Orthonormal coupled pair states `N (|r s⟩ + σ (-1)^{j_r+j_s-J} |s r⟩)` with `r ≤ s`,
/// total `J`, fixed parity and exchange sign `σ`.
#[derive(Clone, Debug)]
pub struct PairSpace {
    pub big_j: u32,
    pub even: bool,
    pub exchange: Exchange,
    pub pairs: Vec<(usize, usize)>,
    pub norms: Vec<f64>,
    /// `ε_r + ε_s`.
    pub h0: Vec<f64>,
    index: HashMap<(usize, usize), usize>,
}

impl PairSpace {
    pub fn new(basis: &OrbitalBasis, big_j: u32, even: bool, exchange: Exchange) -> Self {
        let sigma = exchange.sign();
        let mut pairs = Vec::new();
        let mut norms = Vec::new();
        for r in 0..basis.len() {
            for s in r..basis.len() {
                let (a, b) = (&basis.orbitals[r], &basis.orbitals[s]);
                if !triangle(a.two_j(), b.two_j(), 2 * big_j) || ((a.l() + b.l()) % 2 == 0) != even {
                    continue;
                }
                if r == s {
                    if sigma * swap_phase(basis, r, r, big_j) < 0.0 {
                        continue;
                    }
                    norms.push(0.5);
                } else {
                    norms.push(std::f64::consts::FRAC_1_SQRT_2);
                }
                pairs.push((r, s));
            }
        }
        let h0 = pairs.iter().map(|&(r, s)| basis.energy(r) + basis.energy(s)).collect();
        let index = pairs.iter().enumerate().map(|(i, &p)| (p, i)).collect();
        PairSpace { big_j, even, exchange, pairs, norms, h0, index }
    }

    pub fn dim(&self) -> usize {
        self.pairs.len()
    }

    /// Index of the state built on `{r, s}` in either order.
    pub fn position(&self, r: usize, s: usize) -> Option<usize> {
        self.index.get(&(r.min(s), r.max(s))).copied()
    }

    /// Straight-product coefficients `C[r][s]` of `Σ_i v_i |i⟩`.
    pub fn to_straight(&self, basis: &OrbitalBasis, v: &[f64]) -> DMatrix<f64> {
        let n = basis.len();
        let sigma = self.exchange.sign();
        let mut c = DMatrix::zeros(n, n);
        for (i, &(r, s)) in self.pairs.iter().enumerate() {
            let x = self.norms[i] * v[i];
            c[(r, s)] += x;
            c[(s, r)] += sigma * swap_phase(basis, r, s, self.big_j) * x;
        }
        c
    }

    /// Projection of straight-product coefficients onto this space.
    pub fn from_straight(&self, basis: &OrbitalBasis, c: &DMatrix<f64>) -> Vec<f64> {
        let sigma = self.exchange.sign();
        self.pairs
            .iter()
            .zip(&self.norms)
            .map(|(&(r, s), &nrm)| nrm * (c[(r, s)] + sigma * swap_phase(basis, r, s, self.big_j) * c[(s, r)]))
            .collect()
    }

    /// Per-channel dimensions, keyed by the κ pair of the canonical ordering.
    pub fn channels(&self, basis: &OrbitalBasis) -> Vec<(TwoElectronChannel, usize)> {
        let mut out: Vec<(TwoElectronChannel, usize)> = Vec::new();
        for &(r, s) in &self.pairs {
            let ch = TwoElectronChannel {
                kappa1: basis.orbitals[r].kappa,
                kappa2: basis.orbitals[s].kappa,
                big_j: self.big_j,
                exchange: self.exchange,
            };
            match out.iter_mut().find(|(c, _)| *c == ch) {
                Some((_, n)) => *n += 1,
                None => out.push((ch, 1)),
            }
        }
        out
    }
}
