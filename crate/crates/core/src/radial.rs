//! Exponential radial grid and the discrete Dirac spectrum of a point nucleus.
//!
//! The radial operator is written in the logarithmic variable `x = ln r` on a staggered
//! mesh: the large component lives on the points `x_i`, the small component on the
//! midpoints `x_i + s h` with `s = +1/2` for κ < 0 and `s = -1/2` for κ > 0. With
//! `s = +1/2` and κ > 0 the truncated origin binds a `r^{-κ}` edge mode; with
//! `s = -1/2` and κ < 0 the origin error is larger. Derivatives and the midpoint
//! transfer use band-limited (sinc) interpolation, which converges exponentially in the
//! step and, being staggered, has no spurious doubled roots. Symmetrizing with the
//! weights `h r` gives a real symmetric `2N × 2N` matrix.
//!
//! Both midpoint sets lie on one lattice, so the main points and the midpoints of
//! either sign interleave into a fine mesh of `2N + 1` points with step `h/2`. Each
//! fine point carries the weight `h r` of its own sublattice. Densities `P P'` and
//! `Q Q'` use native samples only (odd and even points respectively); mixed products
//! `P Q'` use the sinc transfer of the other component and average both sublattices.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::quad::gauss_legendre;

#[derive(Clone, Debug)]
pub struct RadialGrid {
    pub r: Vec<f64>,
    pub w: Vec<f64>,
    pub r_min: f64,
    pub r_max: f64,
    pub h: f64,
    /// Interleaved mesh `r_min e^{(m-1) h/2}`, `m = 0..=2N`, for operator integrals.
    /// Odd entries are the main points.
    pub fine: QuadGrid,
}

/// Point set with quadrature weights.
#[derive(Clone, Debug)]
pub struct QuadGrid {
    pub r: Vec<f64>,
    pub w: Vec<f64>,
    /// Step in `ln r`.
    pub h: f64,
}

impl QuadGrid {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        self.w.iter().zip(f).map(|(w, f)| w * f).sum()
    }
}

/// Builds `r_i = r_min e^{h(i-1)}`. Weights are the trapezoidal rule in `x`; the first
/// weight also carries the geometric tail of the virtual points below `r_min`, and
/// the last one is halved.
pub fn make_grid(n: usize, r_min: f64, r_max: f64) -> Result<RadialGrid> {
    if n < 2 {
        return Err(Error::InvalidGrid(format!("need at least 2 points, got {n}")));
    }
    if !(r_min > 0.0 && r_max > r_min && r_max.is_finite()) {
        return Err(Error::InvalidGrid(format!("bad bounds r_min={r_min}, r_max={r_max}")));
    }
    let h = (r_max / r_min).ln() / (n - 1) as f64;
    let r: Vec<f64> = (0..n).map(|i| r_min * (h * i as f64).exp()).collect();
    let mut w: Vec<f64> = r.iter().map(|&ri| h * ri).collect();
    w[0] = h * r[0] / (1.0 - (-h).exp());
    w[n - 1] *= 0.5;
    let fine_r: Vec<f64> =
        (0..=2 * n).map(|m| r_min * (0.5 * h * (m as f64 - 1.0)).exp()).collect();
    let fine_w: Vec<f64> = fine_r.iter().map(|&ri| h * ri).collect();
    Ok(RadialGrid { r, w, r_min, r_max, h, fine: QuadGrid { r: fine_r, w: fine_w, h: 0.5 * h } })
}

impl RadialGrid {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        self.w.iter().zip(f).map(|(w, f)| w * f).sum()
    }

    pub fn integrate_fn(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.r.iter().zip(&self.w).map(|(&r, w)| w * f(r)).sum()
    }

    /// Small-component points for `kappa`.
    pub fn half_points(&self, kappa: i32) -> Vec<f64> {
        let shift = (half_offset(kappa) * self.h).exp();
        self.r.iter().map(|r| r * shift).collect()
    }

    /// Weights `h r` under which the discrete orbitals of `kappa` are orthonormal.
    pub fn dvr_weights(&self, kappa: i32) -> (Vec<f64>, Vec<f64>) {
        (
            self.r.iter().map(|r| self.h * r).collect(),
            self.half_points(kappa).iter().map(|r| self.h * r).collect(),
        )
    }
}

/// Offset of the small-component points, in units of the step.
pub fn half_offset(kappa: i32) -> f64 {
    if kappa < 0 { 0.5 } else { -0.5 }
}

fn sinc(t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        let pt = std::f64::consts::PI * t;
        pt.sin() / pt
    }
}

/// `S[k][j] = sinc(k step + offset - j)`: values at other points from samples on `j`.
fn sinc_transfer(n_out: usize, step: f64, offset: f64, n_in: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n_out, n_in, |k, j| {
        let t = k as f64 * step + offset - j as f64;
        if t.fract() == 0.0 { if t == 0.0 { 1.0 } else { 0.0 } } else { sinc(t) }
    })
}

/// Derivative (per unit index) of the sinc interpolant at half-integer offsets.
fn sinc_derivative(n: usize, offset: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |k, j| {
        let t = k as f64 + offset - j as f64;
        // cos(πt) vanishes at half-integers.
        -sinc(t) / t
    })
}

/// One eigenstate of the discrete radial Dirac operator.
#[derive(Clone, Debug)]
pub struct Orbital {
    pub kappa: i32,
    /// Position in the ascending spectrum of this κ (negative branch first).
    pub index: usize,
    /// Energy with the rest mass subtracted, Hartree.
    pub energy: f64,
    /// Large component `P` on the main points.
    pub f: Vec<f64>,
    /// Small component `Q` on the midpoints of this κ.
    pub g: Vec<f64>,
    /// `P` on the fine mesh: native on odd points, transferred on even ones.
    pub f_fine: Vec<f64>,
    /// `Q` on the fine mesh: native on even points (zero at the one even point outside
    /// this κ's midpoint set), transferred on odd ones.
    pub g_fine: Vec<f64>,
    pub positive: bool,
}

impl Orbital {
    pub fn l(&self) -> u32 {
        kappa_l(self.kappa)
    }

    /// Twice the total angular momentum.
    pub fn two_j(&self) -> u32 {
        kappa_two_j(self.kappa)
    }

    /// Spectroscopic label such as `2p-` for bound positive states.
    pub fn label(&self, n_principal: usize) -> String {
        let l = ["s", "p", "d", "f", "g", "h", "i", "k", "l"][self.l() as usize];
        let sign = if self.kappa > 0 { "-" } else if self.l() > 0 { "+" } else { "" };
        format!("{n_principal}{l}{sign}")
    }

    /// `P_a P_b + Q_a Q_b` on the fine mesh, native samples only.
    pub fn density(&self, other: &Orbital) -> Vec<f64> {
        (0..self.f_fine.len())
            .map(|m| {
                if m % 2 == 1 {
                    self.f_fine[m] * other.f_fine[m]
                } else {
                    self.g_fine[m] * other.g_fine[m]
                }
            })
            .collect()
    }

    /// `P_a Q_b` on the fine mesh, half weight on each sublattice.
    pub fn mixed(&self, other: &Orbital) -> Vec<f64> {
        self.f_fine.iter().zip(&other.g_fine).map(|(f, g)| 0.5 * f * g).collect()
    }
}

pub fn kappa_l(kappa: i32) -> u32 {
    if kappa > 0 {
        kappa as u32
    } else {
        (-kappa - 1) as u32
    }
}

pub fn kappa_two_j(kappa: i32) -> u32 {
    2 * kappa.unsigned_abs() - 1
}

/// Full discrete spectrum per κ for one nuclear charge.
#[derive(Clone, Debug)]
pub struct SpectrumSet {
    pub z: f64,
    pub c: f64,
    pub grid: RadialGrid,
    pub by_kappa: BTreeMap<i32, Vec<Orbital>>,
}

/// Point-nucleus Dirac energy for principal quantum number `n`, rest mass subtracted.
pub fn sommerfeld_energy(z: f64, n: u32, kappa: i32, c: f64) -> f64 {
    let za = z / c;
    let k = kappa.unsigned_abs() as f64;
    assert!(n as f64 >= k, "n must be at least |kappa|");
    let gamma = (k * k - za * za).sqrt();
    let denom = n as f64 - k + gamma;
    c * c * (1.0 / (1.0 + (za / denom).powi(2)).sqrt() - 1.0)
}

/// Diagonalizes the radial Dirac Hamiltonian for `-Z/r`:
/// `[[V, c(-d/dr + κ/r)], [c(d/dr + κ/r), V - 2c²]]`.
pub fn dirac_spectrum(z: f64, kappa: i32, grid: &RadialGrid, c: f64) -> Result<Vec<Orbital>> {
    if kappa == 0 {
        return Err(Error::InvalidGrid("kappa must be nonzero".into()));
    }
    let z_alpha = z / c;
    if z_alpha >= kappa.unsigned_abs() as f64 {
        return Err(Error::SupercriticalZ { z_alpha, kappa });
    }
    let n = grid.len();
    let (wp, wq) = grid.dvr_weights(kappa);
    let r_half = grid.half_points(kappa);
    let s = half_offset(kappa);
    let k = kappa as f64;
    // (1/r)(d/dx + κ) from main points to midpoints, symmetrized with r^{±1/2}.
    let mut m = sinc_derivative(n, s) / grid.h + sinc_transfer(n, 1.0, s, n) * k;
    for a in 0..n {
        for b in 0..n {
            m[(a, b)] /= (r_half[a] * grid.r[b]).sqrt();
        }
    }
    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        h[(i, i)] = -z / grid.r[i];
        h[(n + i, n + i)] = -z / r_half[i] - 2.0 * c * c;
    }
    for a in 0..n {
        for b in 0..n {
            let x = c * m[(a, b)];
            h[(n + a, b)] = x;
            h[(b, n + a)] = x;
        }
    }
    let eig = SymmetricEigen::try_new(h, 1e-15, 0)
        .ok_or_else(|| Error::DiagonalizationFailure(format!("kappa {kappa}")))?;
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    // Fine point m sits at index (m - 1)/2 of the main mesh.
    let nf = grid.fine.len();
    let f_to_fine = sinc_transfer(nf, 0.5, -0.5, n);
    let g_to_fine = sinc_transfer(nf, 0.5, -0.5 - s, n);
    let outside = if kappa < 0 { 0 } else { nf - 1 };
    let threshold = -c * c;
    let mut out = Vec::with_capacity(2 * n);
    for (index, &col) in order.iter().enumerate() {
        let energy = eig.eigenvalues[col];
        let v = eig.eigenvectors.column(col);
        let mut f: Vec<f64> = (0..n).map(|i| v[i] / wp[i].sqrt()).collect();
        let mut g: Vec<f64> = (0..n).map(|i| v[n + i] / wq[i].sqrt()).collect();
        let positive = energy > threshold;
        // Fix the overall sign: the dominant component is positive at its largest sample.
        let (dominant, weights) = if positive { (&f, &wp) } else { (&g, &wq) };
        let peak = dominant
            .iter()
            .zip(weights)
            .map(|(x, w)| x * w.sqrt())
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(1.0);
        if peak < 0.0 {
            f.iter_mut().for_each(|x| *x = -*x);
            g.iter_mut().for_each(|x| *x = -*x);
        }
        let fv = nalgebra::DVector::from_column_slice(&f);
        let gv = nalgebra::DVector::from_column_slice(&g);
        let f_fine = (&f_to_fine * &fv).as_slice().to_vec();
        let mut g_fine = (&g_to_fine * &gv).as_slice().to_vec();
        g_fine[outside] = 0.0;
        out.push(Orbital { kappa, index, energy, f, g, f_fine, g_fine, positive });
    }
    Ok(out)
}

/// Builds the spectrum for every κ in `kappas`.
pub fn build_spectrum(z: f64, kappas: &[i32], grid: &RadialGrid, c: f64) -> Result<SpectrumSet> {
    let mut by_kappa = BTreeMap::new();
    for &k in kappas {
        by_kappa.insert(k, dirac_spectrum(z, k, grid, c)?);
    }
    Ok(SpectrumSet { z, c, grid: grid.clone(), by_kappa })
}

/// Keeps only positive-energy states unless `include_negative` is set.
pub fn nvp_filter(spectrum: &SpectrumSet, include_negative: bool) -> SpectrumSet {
    let mut out = spectrum.clone();
    if !include_negative {
        for orbitals in out.by_kappa.values_mut() {
            orbitals.retain(|o| o.positive);
        }
    }
    out
}

impl SpectrumSet {
    pub fn orbitals(&self, kappa: i32) -> &[Orbital] {
        self.by_kappa.get(&kappa).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Positive-energy states of one κ, ascending.
    pub fn positive(&self, kappa: i32) -> impl Iterator<Item = &Orbital> {
        self.orbitals(kappa).iter().filter(|o| o.positive)
    }

    /// Bound state with principal quantum number `n` (positive branch).
    pub fn bound(&self, n: u32, kappa: i32) -> Option<&Orbital> {
        let first_n = kappa_l(kappa) + 1;
        if n < first_n {
            return None;
        }
        self.positive(kappa).nth((n - first_n) as usize)
    }

    /// Writes the plain-text spectrum table.
    pub fn write_dump(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "# Z = {}", self.z)?;
        writeln!(out, "# N = {}", self.grid.len())?;
        writeln!(out, "# r_min = {:e}", self.grid.r_min)?;
        writeln!(out, "# r_max = {:e}", self.grid.r_max)?;
        writeln!(out, "# c = {}", self.c)?;
        writeln!(out, "# kappa index energy branch")?;
        for (kappa, orbitals) in &self.by_kappa {
            for o in orbitals {
                let branch = if o.positive { "+" } else { "-" };
                writeln!(out, "{kappa} {} {:.15e} {branch}", o.index, o.energy)?;
            }
        }
        Ok(())
    }
}

/// Native inner product `Σ h r_i P_a P_b + Σ h r'_i Q_a Q_b` for orbitals of one κ.
pub fn overlap(grid: &RadialGrid, a: &Orbital, b: &Orbital) -> f64 {
    debug_assert_eq!(a.kappa, b.kappa);
    let (wp, wq) = grid.dvr_weights(a.kappa);
    (0..grid.len()).map(|i| wp[i] * a.f[i] * b.f[i] + wq[i] * a.g[i] * b.g[i]).sum()
}

/// Max deviation from the identity of `Σ_n v_n v_nᵀ`, where `v_n` are the weighted
/// component vectors of all `2N` states of one κ.
pub fn completeness_defect(grid: &RadialGrid, orbitals: &[Orbital]) -> f64 {
    let n = grid.len();
    let Some(first) = orbitals.first() else { return 1.0 };
    let (wp, wq) = grid.dvr_weights(first.kappa);
    let mut vs = DMatrix::<f64>::zeros(2 * n, orbitals.len());
    for (c, o) in orbitals.iter().enumerate() {
        for i in 0..n {
            vs[(i, c)] = o.f[i] * wp[i].sqrt();
            vs[(n + i, c)] = o.g[i] * wq[i].sqrt();
        }
    }
    (&vs * vs.transpose() - DMatrix::identity(2 * n, 2 * n)).amax()
}

/// Lagrange weights for `∫_p^{p+θ} f(u) du` from samples at `u = 0..8`.
fn lagrange_partial(p: usize, theta: f64) -> [f64; 8] {
    let (x, w) = gauss_legendre(4, p as f64, p as f64 + theta);
    let mut out = [0.0; 8];
    for (i, o) in out.iter_mut().enumerate() {
        *o = x
            .iter()
            .zip(&w)
            .map(|(&u, &wq)| {
                let basis: f64 = (0..8)
                    .filter(|&j| j != i)
                    .map(|j| (u - j as f64) / (i as f64 - j as f64))
                    .product();
                wq * basis
            })
            .sum();
    }
    out
}

/// Cumulative integration weights on a uniform lattice of `n` nodes (unit step):
/// row `2j` integrates from node 0 to node `j`, row `2j + 1` to `j + 1/2`.
fn cumulative_weights(n: usize) -> DMatrix<f64> {
    let mut c = DMatrix::<f64>::zeros(2 * n - 1, n);
    let full: Vec<[f64; 8]> = (0..8).map(|p| lagrange_partial(p, 1.0)).collect();
    let half: Vec<[f64; 8]> = (0..8).map(|p| lagrange_partial(p, 0.5)).collect();
    for j in 0..n - 1 {
        // Eight-node window around the interval [j, j + 1], clamped to the lattice.
        let start = j.saturating_sub(3).min(n.saturating_sub(8));
        let p = j - start;
        let width = n.min(8);
        let (wf, wh) = if width == 8 {
            (full[p], half[p])
        } else {
            // Short lattices fall back to the trapezoid rule.
            let mut a = [0.0; 8];
            let mut b = [0.0; 8];
            a[p] = 0.5;
            a[p + 1] = 0.5;
            b[p] = 0.375;
            b[p + 1] = 0.125;
            (a, b)
        };
        for col in 0..n {
            c[(2 * j + 2, col)] = c[(2 * j, col)];
            c[(2 * j + 1, col)] = c[(2 * j, col)];
        }
        for q in 0..width {
            c[(2 * j + 2, start + q)] += wf[q];
            c[(2 * j + 1, start + q)] += wh[q];
        }
    }
    c
}

/// Symmetric matrix `K` with `R^L = ρ₁ᵀ K ρ₂` for fine-mesh densities, where
/// `R^L = ∫∫ ρ₁(r₁) r_<^L / r_>^{L+1} ρ₂(r₂) dr₁ dr₂`.
///
/// Each sublattice of the fine mesh is integrated with eight-point Lagrange rules in
/// `x`; the potential is evaluated at every fine point and weighted by `h r`.
pub fn slater_kernel(grid: &RadialGrid, l: u32) -> DMatrix<f64> {
    let n = grid.len();
    let nf = grid.fine.len();
    let r = &grid.fine.r;
    let lf = l as f64;
    let mut k = DMatrix::<f64>::zeros(nf, nf);
    // Odd sublattice: n nodes, fine index 2i + 1, coordinate i.
    // Even sublattice: n + 1 nodes, fine index 2e, coordinate e.
    for (nodes, first) in [(n, 1usize), (n + 1, 0usize)] {
        let cum = cumulative_weights(nodes);
        let last = cum.nrows() - 1;
        for t in 0..nf {
            // Target coordinate on this sublattice in half steps.
            let row = if first == 1 {
                if t == 0 { None } else { Some((t - 1).min(last)) }
            } else {
                Some(t.min(last))
            };
            for q in 0..nodes {
                let m = 2 * q + first;
                let below = row.map_or(0.0, |rw| cum[(rw, q)]);
                let above = cum[(last, q)] - below;
                let ratio = r[m] / r[t];
                k[(t, m)] = grid.h * (below * ratio.powf(lf + 1.0) + above * ratio.powf(-lf));
            }
        }
    }
    for t in 0..nf {
        let wt = grid.fine.w[t];
        for m in 0..nf {
            k[(t, m)] *= wt;
        }
    }
    (&k + k.transpose()) * 0.5
}
