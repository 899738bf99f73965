//! One retarded transverse photon exchanged between pair states.
//!
//! Photon terms are products `coef(k) T^K(1)·T^K(2)` of one-electron vertices. The
//! bare exchange integrates the straight element against both time-ordered
//! denominators. The dressed exchange emits the photon from a Coulomb-correlated
//! state, propagates the two electrons plus photon with the resolvent of the sector
//! Hamiltonian `H0 + λ/r₁₂`, and absorbs it again.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::basis::{swap_phase, Exchange, OrbitalBasis, PairSpace, SixJCache};
use super::coulomb::{pair_model, solve_coulomb_pair, CoulombIntegrals, PairFunction, PairOptions};
use super::kgrid::{chi_principal_value, KGrid, MIN_POLE, POLE_CLEARANCE};
use crate::angular::{
    alpha_angular, alpha_density, bessel_weights, coulomb_gauge_f_assemble, gaunt_rank_phase, parity_sign, reduced_c,
    sr_coefficients, triangle, FTerm, InteractionKind, SeparatedInteraction,
};
use crate::error::{Error, Result};
use crate::modelspace::MatrixModel;
use crate::radial::slater_kernel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Gauge {
    Coulomb,
    Feynman,
}

impl Gauge {
    pub fn name(self) -> &'static str {
        match self {
            Gauge::Coulomb => "coulomb",
            Gauge::Feynman => "feynman",
        }
    }
}

/// Retarded multipole terms for a gauge.
///
/// Coulomb gauge: Gaunt `−(2l+1)` and scalar retardation `1/(2l+1)`. Feynman gauge:
/// Gaunt `−(2l+1)` and the retarded charge term `+(2l+1)` (kind `Coulomb`).
/// Only kinds listed in `kinds` are kept.
pub fn gauge_terms(gauge: Gauge, kinds: &[InteractionKind], l_max: u32) -> Vec<FTerm> {
    let all = match gauge {
        Gauge::Coulomb => coulomb_gauge_f_assemble(l_max).terms,
        Gauge::Feynman => (0..=l_max)
            .flat_map(|l| {
                let w = (2 * l + 1) as f64;
                [
                    FTerm { l, kind: InteractionKind::Gaunt, weight: -w },
                    FTerm { l, kind: InteractionKind::Coulomb, weight: w },
                ]
            })
            .collect(),
    };
    all.into_iter().filter(|t| kinds.contains(&t.kind)).collect()
}

/// One-electron vertex operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VertexOp {
    /// `j_l(kr) {C^l α}^K`.
    Gaunt { l: u32, rank: u32 },
    /// The rank-`l` scalar-retardation potential.
    ScalarRetardation { l: u32 },
    /// `j_l(kr) C^l`.
    Charge { l: u32 },
}

impl VertexOp {
    pub fn rank(self) -> u32 {
        match self {
            VertexOp::Gaunt { rank, .. } => rank,
            VertexOp::ScalarRetardation { l } | VertexOp::Charge { l } => l,
        }
    }

    /// Whether the operator has odd parity.
    pub fn odd(self) -> bool {
        match self {
            VertexOp::Gaunt { l, .. } => l % 2 == 0,
            VertexOp::ScalarRetardation { l } | VertexOp::Charge { l } => l % 2 == 1,
        }
    }
}

/// Rank component of a photon term with the phase of its scalar product, including
/// the `i·i = −1` of two `α`-type reduced elements.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VertexPart {
    pub op: VertexOp,
    pub phase: f64,
}

pub fn term_parts(term: &FTerm) -> Vec<VertexPart> {
    let l = term.l;
    match term.kind {
        InteractionKind::Gaunt => (l.saturating_sub(1)..=l + 1)
            .filter(|&rank| triangle(2 * l, 2, 2 * rank))
            .map(|rank| VertexPart { op: VertexOp::Gaunt { l, rank }, phase: -gaunt_rank_phase(l, rank) })
            .collect(),
        InteractionKind::ScalarRetardation => vec![VertexPart { op: VertexOp::ScalarRetardation { l }, phase: -1.0 }],
        InteractionKind::Coulomb => vec![VertexPart { op: VertexOp::Charge { l }, phase: 1.0 }],
    }
}

/// k-independent radial products and angular factors for vertex matrices.
pub struct PhotonVertices<'a> {
    pub basis: &'a OrbitalBasis,
    /// `½ P_p Q_q` on the fine mesh, index `p n + q`.
    mixed: Vec<Vec<f64>>,
    densities: Vec<Vec<f64>>,
    alpha: HashMap<(i32, i32, u32, u32), (f64, f64)>,
    charge: HashMap<(i32, i32, u32), f64>,
    max_order: u32,
}

/// Vertex matrices `X[p][q] = ⟨p||T||q⟩` (coefficient of `i` for `α`-type) of every
/// part of every term at one photon momentum.
pub struct VertexTables {
    pub k: f64,
    /// Per term: `coef(k)` and one matrix per part.
    pub terms: Vec<(f64, Vec<DMatrix<f64>>)>,
}

impl<'a> PhotonVertices<'a> {
    pub fn new(basis: &'a OrbitalBasis, l_max: u32) -> Self {
        let n = basis.len();
        let o = &basis.orbitals;
        let mut mixed = Vec::with_capacity(n * n);
        let mut densities = Vec::with_capacity(n * n);
        for p in 0..n {
            for q in 0..n {
                mixed.push(o[p].mixed(&o[q]));
                densities.push(o[p].density(&o[q]));
            }
        }
        let kappas = basis.kappas();
        let mut alpha = HashMap::new();
        let mut charge = HashMap::new();
        for &ka in &kappas {
            for &kb in &kappas {
                for big_l in 0..=l_max + 1 {
                    charge.insert((ka, kb, big_l), reduced_c(ka, big_l, kb));
                    for rank in big_l.saturating_sub(1)..=big_l + 1 {
                        alpha.insert((ka, kb, big_l, rank), alpha_angular(ka, big_l, rank, kb));
                    }
                }
            }
        }
        PhotonVertices { basis, mixed, densities, alpha, charge, max_order: l_max + 1 }
    }

    fn bessel(&self, k: f64) -> Vec<Vec<f64>> {
        bessel_weights(&self.basis.grid, k, self.max_order)
    }

    fn alpha_matrix(&self, big_l: u32, rank: u32, radial: &[f64], scale: f64, out: &mut DMatrix<f64>) {
        let n = self.basis.len();
        let o = &self.basis.orbitals;
        let weighted = radial;
        for p in 0..n {
            for q in 0..n {
                let (a, b) = self.alpha[&(o[p].kappa, o[q].kappa, big_l, rank)];
                if a == 0.0 && b == 0.0 {
                    continue;
                }
                let (pq, qp) = (&self.mixed[p * n + q], &self.mixed[q * n + p]);
                let mut s = 0.0;
                for m in 0..weighted.len() {
                    s += weighted[m] * (a * pq[m] - b * qp[m]);
                }
                out[(p, q)] += scale * s;
            }
        }
    }

    pub fn matrix(&self, op: VertexOp, bessel: &[Vec<f64>]) -> DMatrix<f64> {
        let n = self.basis.len();
        let mut x = DMatrix::zeros(n, n);
        match op {
            VertexOp::Gaunt { l, rank } => self.alpha_matrix(l, rank, &bessel[l as usize], 1.0, &mut x),
            VertexOp::ScalarRetardation { l } => {
                for (big_l, coef) in sr_coefficients(l) {
                    if coef != 0.0 {
                        self.alpha_matrix(big_l, l, &bessel[big_l as usize], coef, &mut x);
                    }
                }
            }
            VertexOp::Charge { l } => {
                let o = &self.basis.orbitals;
                let jl = &bessel[l as usize];
                for p in 0..n {
                    for q in 0..n {
                        let a = self.charge[&(o[p].kappa, o[q].kappa, l)];
                        if a != 0.0 {
                            let rho = &self.densities[p * n + q];
                            x[(p, q)] = a * (0..rho.len()).map(|m| jl[m] * rho[m]).sum::<f64>();
                        }
                    }
                }
            }
        }
        x
    }

    pub fn tables(&self, k: f64, terms: &[FTerm]) -> VertexTables {
        let bessel = self.bessel(k);
        let c = self.basis.c;
        let terms = terms
            .iter()
            .map(|t| {
                let mats = term_parts(t).iter().map(|p| self.matrix(p.op, &bessel)).collect();
                (SeparatedInteraction::coefficient(t, k, c), mats)
            })
            .collect();
        VertexTables { k, terms }
    }
}

/// Orbital basis, retarded terms and caches shared by all photon calculations.
pub struct PhotonContext<'a> {
    pub basis: &'a OrbitalBasis,
    pub terms: Vec<FTerm>,
    pub l_max: u32,
    vertices: PhotonVertices<'a>,
    sixj: SixJCache,
}

impl<'a> PhotonContext<'a> {
    pub fn new(basis: &'a OrbitalBasis, gauge: Gauge, kinds: &[InteractionKind], l_max: u32) -> Self {
        PhotonContext {
            basis,
            terms: gauge_terms(gauge, kinds, l_max),
            l_max,
            vertices: PhotonVertices::new(basis, l_max),
            sixj: SixJCache::default(),
        }
    }

    pub fn tables(&self, k: f64) -> VertexTables {
        self.vertices.tables(k, &self.terms)
    }

    /// Numerator `f(k)` of the coupled straight element `⟨(r s)J|f(k)|(t u)J⟩`, per term.
    pub fn straight_numerator(&self, tables: &VertexTables, r: usize, s: usize, t: usize, u: usize, big_j: u32) -> Vec<f64> {
        let b = self.basis;
        let tj = [b.two_j(r), b.two_j(s), b.two_j(t), b.two_j(u)];
        self.terms
            .iter()
            .zip(&tables.terms)
            .map(|(term, (coef, mats))| {
                let mut g = 0.0;
                for (part, x) in term_parts(term).iter().zip(mats) {
                    let v = x[(r, t)] * x[(s, u)];
                    if v != 0.0 {
                        g += part.phase * self.sixj.two_electron(tj[0], tj[1], tj[2], tj[3], 2 * big_j, part.op.rank()) * v;
                    }
                }
                coef * g
            })
            .collect()
    }
}

/// Bare one-photon element with its per-term breakdown, Hartree.
#[derive(Clone, Debug)]
pub struct OnePhotonElement {
    pub per_term: Vec<(FTerm, f64)>,
    pub poles: Vec<f64>,
}

impl OnePhotonElement {
    pub fn total(&self) -> f64 {
        self.per_term.iter().map(|(_, v)| v).sum()
    }

    pub fn kind_total(&self, kind: InteractionKind) -> f64 {
        self.per_term.iter().filter(|(t, _)| t.kind == kind).map(|(_, v)| v).sum()
    }
}

fn check_clearance(kgrid: &KGrid, pole: f64) -> Result<()> {
    match kgrid.nodes.iter().find(|&&k| ((k - pole) / pole).abs() < POLE_CLEARANCE) {
        Some(&k) => Err(Error::PoleOnGrid { k, pole }),
        None => Ok(()),
    }
}

/// `⟨i|𝒱₁(E)|j⟩` between states of `space`: both time orderings, principal value at
/// the poles `k_p = (E − ε_r − ε_u)/c > 0`.
pub fn one_photon_matrix_element(
    ctx: &PhotonContext,
    space: &PairSpace,
    i: usize,
    j: usize,
    energy: f64,
    kgrid: &KGrid,
) -> Result<OnePhotonElement> {
    let b = ctx.basis;
    let c = b.c;
    let big_j = space.big_j;
    let (r, s) = space.pairs[i];
    let (t, u) = space.pairs[j];
    let norm = 2.0 * space.norms[i] * space.norms[j];
    let combos = [(r, s, t, u, norm), (r, s, u, t, norm * space.exchange.sign() * swap_phase(b, t, u, big_j))];
    let mut per_term = vec![0.0; ctx.terms.len()];
    let mut poles = Vec::new();
    // Samples of each combo numerator at the nodes.
    let node_tables: Vec<VertexTables> = kgrid.nodes.iter().map(|&k| ctx.tables(k)).collect();
    for &(r, s, t, u, f) in &combos {
        let g: Vec<Vec<f64>> = node_tables.iter().map(|tb| ctx.straight_numerator(tb, r, s, t, u, big_j)).collect();
        for d in [energy - b.energy(r) - b.energy(u), energy - b.energy(s) - b.energy(t)] {
            let kp = d / c;
            if kp > MIN_POLE {
                check_clearance(kgrid, kp)?;
                poles.push(kp);
                let gp = ctx.straight_numerator(&ctx.tables(kp), r, s, t, u, big_j);
                for (ti, acc) in per_term.iter_mut().enumerate() {
                    let samples: Vec<f64> = g.iter().map(|gk| gk[ti]).collect();
                    *acc += f * kgrid.principal_value(kp, &samples, gp[ti]) / c;
                }
            } else {
                for (node, gk) in g.iter().enumerate() {
                    let den = d - c * kgrid.nodes[node];
                    for (ti, acc) in per_term.iter_mut().enumerate() {
                        *acc += f * kgrid.weights[node] * gk[ti] / den;
                    }
                }
            }
        }
    }
    Ok(OnePhotonElement { per_term: ctx.terms.iter().copied().zip(per_term).collect(), poles })
}

/// k-integral of the Gaunt terms with both denominators replaced by `−1/(ck)`.
pub fn unretarded_gaunt_integral(ctx: &PhotonContext, r: usize, s: usize, t: usize, u: usize, big_j: u32, kgrid: &KGrid) -> f64 {
    let c = ctx.basis.c;
    let mut sum = 0.0;
    for (&k, &w) in kgrid.nodes.iter().zip(&kgrid.weights) {
        let g = ctx.straight_numerator(&ctx.tables(k), r, s, t, u, big_j);
        let gaunt: f64 = ctx.terms.iter().zip(&g).filter(|(t, _)| t.kind == InteractionKind::Gaunt).map(|(_, v)| v).sum();
        sum += w * gaunt * (-2.0 / (c * k));
    }
    sum
}

/// Coupled `⟨(r s)J|−α₁·α₂/r₁₂|(t u)J⟩` from Slater-type kernels, multipoles `l ≤ l_max`.
pub fn instantaneous_gaunt_element(basis: &OrbitalBasis, r: usize, s: usize, t: usize, u: usize, big_j: u32, l_max: u32) -> f64 {
    let o = &basis.orbitals;
    let sixj = SixJCache::default();
    let mut sum = 0.0;
    for l in 0..=l_max {
        let kernel = slater_kernel(&basis.grid, l);
        for rank in (l.saturating_sub(1)..=l + 1).filter(|&k| triangle(2 * l, 2, 2 * k)) {
            let a1 = alpha_angular(o[r].kappa, l, rank, o[t].kappa);
            let a2 = alpha_angular(o[s].kappa, l, rank, o[u].kappa);
            if (a1.0 == 0.0 && a1.1 == 0.0) || (a2.0 == 0.0 && a2.1 == 0.0) {
                continue;
            }
            let rho1 = DVector::from_vec(alpha_density(&o[r], &o[t], a1));
            let rho2 = DVector::from_vec(alpha_density(&o[s], &o[u], a2));
            let radial = (rho1.transpose() * &kernel * rho2)[(0, 0)];
            let f = sixj.two_electron(o[r].two_j(), o[s].two_j(), o[t].two_j(), o[u].two_j(), 2 * big_j, rank);
            sum += gaunt_rank_phase(l, rank) * f * radial;
        }
    }
    sum
}

// ---------------------------------------------------------------------------
// Dressed exchange

/// Coulomb-correlated source state of the photon.
#[derive(Clone, Debug)]
pub struct Reference {
    pub space: PairSpace,
    pub index: usize,
    /// `ε_a + ε_b`.
    pub e0: f64,
    /// `E0 + V_eff`, the eigenvalue of `H0 + λ/r₁₂` reached from the model state.
    pub energy: f64,
    pub lambda: f64,
    /// Intermediate-normalized `ρ_I = Ω|a⟩` over `space`.
    pub rho: DVector<f64>,
    /// `ρ_I` as straight-product coefficients.
    pub straight: DMatrix<f64>,
    pub pair: PairFunction,
    pub model: MatrixModel,
}

impl Reference {
    pub fn new(
        basis: &OrbitalBasis,
        ints: &CoulombIntegrals,
        space: PairSpace,
        pair: (usize, usize),
        lambda: f64,
        opts: &PairOptions,
    ) -> Result<Self> {
        let model = pair_model(basis, &space, ints, &[pair], lambda)?;
        let (pf, veff) = solve_coulomb_pair(&space, &model, opts)?;
        let rho = pf.wave_operator().column(0).into_owned();
        let straight = space.to_straight(basis, rho.as_slice());
        let index = model.model[0];
        Ok(Reference {
            e0: space.h0[index],
            energy: space.h0[index] + veff.matrix[(0, 0)],
            index,
            lambda,
            rho,
            straight,
            pair: pf,
            model,
            space,
        })
    }

    pub fn norm_sqr(&self) -> f64 {
        self.rho.norm_squared()
    }
}

/// Straight-product photonic states of one `J''` and parity, split by exchange
/// symmetry, with the spectral decomposition of `H0 + λ/r₁₂` in each block.
pub struct PhotonSector {
    pub big_j: u32,
    pub even: bool,
    pub blocks: Vec<SectorBlock>,
}

pub struct SectorBlock {
    pub space: PairSpace,
    pub levels: DVector<f64>,
    pub states: DMatrix<f64>,
}

impl PhotonSector {
    pub fn new(basis: &OrbitalBasis, ints: &CoulombIntegrals, big_j: u32, even: bool, lambda: f64) -> Result<Self> {
        let mut blocks = Vec::new();
        for exchange in [Exchange::Symmetric, Exchange::Antisymmetric] {
            let space = PairSpace::new(basis, big_j, even, exchange);
            if space.dim() == 0 {
                continue;
            }
            let h0 = DVector::from_vec(space.h0.clone());
            let (levels, states) = if lambda == 0.0 {
                (h0, DMatrix::identity(space.dim(), space.dim()))
            } else {
                let h = DMatrix::from_diagonal(&h0) + ints.pair_matrix(basis, &space) * lambda;
                let eig = SymmetricEigen::try_new(h, 1e-14, 0)
                    .ok_or_else(|| Error::DiagonalizationFailure(format!("photonic sector J = {big_j}")))?;
                (eig.eigenvalues, eig.eigenvectors)
            };
            blocks.push(SectorBlock { space, levels, states });
        }
        Ok(PhotonSector { big_j, even, blocks })
    }
}

/// Photonic sectors reachable from `reference` by the terms of `ctx`.
pub fn photon_sectors(ctx: &PhotonContext, ints: &CoulombIntegrals, reference: &Reference) -> Result<Vec<PhotonSector>> {
    let j = reference.space.big_j;
    let mut keys: Vec<(u32, bool)> = Vec::new();
    for term in &ctx.terms {
        for part in term_parts(term) {
            let rank = part.op.rank();
            let even = reference.space.even != part.op.odd();
            for jj in j.abs_diff(rank)..=j + rank {
                if !keys.contains(&(jj, even)) {
                    keys.push((jj, even));
                }
            }
        }
    }
    keys.sort();
    keys.into_iter().map(|(jj, even)| PhotonSector::new(ctx.basis, ints, jj, even, reference.lambda)).collect()
}

/// Orbital indices grouped by `2j`.
fn j_groups(basis: &OrbitalBasis) -> Vec<(u32, Vec<usize>)> {
    let mut groups: Vec<(u32, Vec<usize>)> = Vec::new();
    for p in 0..basis.len() {
        let tj = basis.two_j(p);
        match groups.iter_mut().find(|(g, _)| *g == tj) {
            Some((_, v)) => v.push(p),
            None => groups.push((tj, vec![p])),
        }
    }
    groups
}

/// Recoupling factors for one-electron operators acting inside coupled pairs.
struct Recoupling {
    groups: Vec<(u32, Vec<usize>)>,
    /// `(J'', K, group)` → factors of the electron-1 vertex `|J⟩ → |J''⟩`, indexed `[r'][s']`.
    emit: HashMap<(u32, u32, usize), DMatrix<f64>>,
    /// `(J'', K, group)` → factors of the electron-2 vertex `|J''⟩ → |J⟩`, indexed `[r'][s]`.
    absorb: HashMap<(u32, u32, usize), DMatrix<f64>>,
}

impl Recoupling {
    fn new(basis: &OrbitalBasis, big_j: u32, pairs: &[(u32, u32)], sixj: &SixJCache) -> Self {
        let n = basis.len();
        let groups = j_groups(basis);
        let mut emit = HashMap::new();
        let mut absorb = HashMap::new();
        let tj = |p: usize| basis.two_j(p);
        for &(jj, rank) in pairs {
            let norm = (((2 * jj + 1) * (2 * big_j + 1)) as f64).sqrt();
            for (g, (tjg, _)) in groups.iter().enumerate() {
                let tjg = *tjg;
                // ⟨(r' s')J''||T(1)||(t s')J⟩ for t with 2j_t = tjg.
                let e = DMatrix::from_fn(n, n, |r, s| {
                    if !triangle(tj(r), tj(s), 2 * jj) {
                        return 0.0;
                    }
                    parity_sign(((tj(r) + tj(s)) / 2 + big_j + rank) as i64)
                        * norm
                        * sixj.sixj(tj(r), 2 * jj, tj(s), 2 * big_j, tjg, 2 * rank)
                });
                // ⟨(r' s)J||U(2)||(r' s')J''⟩ for s' with 2j_s' = tjg.
                let a = DMatrix::from_fn(n, n, |r, s| {
                    if !triangle(tj(r), tjg, 2 * jj) {
                        return 0.0;
                    }
                    parity_sign(((tj(r) + tjg) / 2 + big_j + rank) as i64)
                        * norm
                        * sixj.sixj(tj(s), 2 * big_j, tj(r), 2 * jj, tjg, 2 * rank)
                });
                emit.insert((jj, rank, g), e);
                absorb.insert((jj, rank, g), a);
            }
        }
        Recoupling { groups, emit, absorb }
    }

    /// Straight `J''` coefficients of `T^K(1) |C⟩_J`.
    fn emit(&self, x: &DMatrix<f64>, c: &DMatrix<f64>, jj: u32, rank: u32) -> DMatrix<f64> {
        let n = x.nrows();
        let mut out = DMatrix::zeros(n, n);
        for (g, (_, idx)) in self.groups.iter().enumerate() {
            let m = x.select_columns(idx.iter()) * c.select_rows(idx.iter());
            out += m.component_mul(&self.emit[&(jj, rank, g)]);
        }
        out
    }

    /// Straight `J` coefficients of the electron-2 reduced element between `⟨(r' s)J|`
    /// and the straight `J''` state `psi`.
    fn absorb(&self, y: &DMatrix<f64>, psi: &DMatrix<f64>, jj: u32, rank: u32) -> DMatrix<f64> {
        let n = y.nrows();
        let mut out = DMatrix::zeros(n, n);
        for (g, (_, idx)) in self.groups.iter().enumerate() {
            let m = psi.select_columns(idx.iter()) * y.select_columns(idx.iter()).transpose();
            out += m.component_mul(&self.absorb[&(jj, rank, g)]);
        }
        out
    }
}

/// Straight-product photonic pair function of one rank component.
#[derive(Clone, Debug)]
pub struct PhotonBlock {
    pub big_j: u32,
    pub even: bool,
    pub exchange: Exchange,
    pub rank: u32,
    /// `V^l(k) ρ_I` projected on the block.
    pub source: DVector<f64>,
    pub coefficients: DVector<f64>,
}

/// Photonic pair function `ρ^l(k) = (E_I − H0 − λ/r₁₂ − ck)⁻¹ V^l(k) ρ_I` for one
/// term, with the emitting vertex on electron 1.
#[derive(Clone, Debug)]
pub struct PhotonPairFunction {
    pub kind: InteractionKind,
    pub l: u32,
    pub k: f64,
    pub k_index: Option<usize>,
    pub blocks: Vec<PhotonBlock>,
    /// Max-norm residual of `(E_I − H0 − λ/r₁₂ − ck) ρ^l − V^l ρ_I`.
    pub residual: f64,
}

pub fn emit_photon_pair(
    ctx: &PhotonContext,
    ints: &CoulombIntegrals,
    reference: &Reference,
    sectors: &[PhotonSector],
    term: usize,
    k: f64,
    k_index: Option<usize>,
) -> Result<PhotonPairFunction> {
    let b = ctx.basis;
    let c = b.c;
    let ft = ctx.terms[term];
    let parts = term_parts(&ft);
    let tables = ctx.tables(k);
    let j = reference.space.big_j;
    let keys: Vec<(u32, u32)> = sectors.iter().flat_map(|s| parts.iter().map(move |p| (s.big_j, p.op.rank()))).collect();
    let rec = Recoupling::new(b, j, &keys, &ctx.sixj);
    let mut blocks = Vec::new();
    let mut residual: f64 = 0.0;
    for (part, x) in parts.iter().zip(&tables.terms[term].1) {
        let rank = part.op.rank();
        let even = reference.space.even != part.op.odd();
        for sector in sectors.iter().filter(|s| s.even == even && triangle(2 * j, 2 * rank, 2 * s.big_j)) {
            let a = rec.emit(x, &reference.straight, sector.big_j, rank);
            for blk in &sector.blocks {
                let src = DVector::from_vec(blk.space.from_straight(b, &a));
                let mut proj = blk.states.transpose() * &src;
                for (i, v) in proj.iter_mut().enumerate() {
                    let den = reference.energy - blk.levels[i] - c * k;
                    if den.abs() < MIN_POLE * c {
                        return Err(Error::PoleOnGrid { k, pole: (reference.energy - blk.levels[i]) / c });
                    }
                    *v /= den;
                }
                let coef = &blk.states * proj;
                let h = DMatrix::from_diagonal(&DVector::from_vec(blk.space.h0.clone()))
                    + ints.pair_matrix(b, &blk.space) * reference.lambda;
                let lhs = coef.scale(reference.energy - c * k) - &h * &coef;
                residual = residual.max((lhs - &src).amax());
                blocks.push(PhotonBlock {
                    big_j: sector.big_j,
                    even,
                    exchange: blk.space.exchange,
                    rank,
                    source: src,
                    coefficients: coef,
                });
            }
        }
    }
    Ok(PhotonPairFunction { kind: ft.kind, l: ft.l, k, k_index, blocks, residual })
}

/// k-integrated absorption vectors `W_term = Σ ∫dk U(2) G(k) T(1) ρ_I` over the
/// reference space (both emitting electrons), per term.
#[derive(Clone, Debug)]
pub struct PhotonFamily {
    pub terms: Vec<FTerm>,
    pub w: Vec<DVector<f64>>,
    pub k_nodes: usize,
    pub poles: Vec<f64>,
}

impl PhotonFamily {
    /// `⟨ρ_I|W⟩/⟨ρ_I|ρ_I⟩` per term, Hartree.
    pub fn energies(&self, reference: &Reference) -> Vec<f64> {
        self.w.iter().map(|w| reference.rho.dot(w) / reference.norm_sqr()).collect()
    }

    pub fn total(&self) -> DVector<f64> {
        self.w.iter().fold(DVector::zeros(self.w[0].len()), |acc, w| acc + w)
    }

    pub fn select(&self, kind: InteractionKind) -> DVector<f64> {
        self.terms
            .iter()
            .zip(&self.w)
            .filter(|(t, _)| t.kind == kind)
            .fold(DVector::zeros(self.w[0].len()), |acc, (_, w)| acc + w)
    }
}

/// Poles `(E_I − Λ_i)/c > 0` of all sector levels below the reference energy.
pub fn sector_poles(reference: &Reference, sectors: &[PhotonSector], c: f64) -> Vec<f64> {
    let mut poles: Vec<f64> = sectors
        .iter()
        .flat_map(|s| s.blocks.iter())
        .flat_map(|b| b.levels.iter().map(|&lv| (reference.energy - lv) / c))
        .filter(|&kp| kp > MIN_POLE)
        .collect();
    poles.sort_by(f64::total_cmp);
    poles.dedup_by(|a, b| ((*a - *b) / *b).abs() < 1e-12);
    poles
}

/// Work list of one sector: `(term, part)` pairs whose rank couples `J` to `J''`.
fn sector_columns(ctx: &PhotonContext, reference: &Reference, sector: &PhotonSector) -> Vec<(usize, usize, VertexPart)> {
    let j = reference.space.big_j;
    let mut cols = Vec::new();
    for (ti, term) in ctx.terms.iter().enumerate() {
        for (pi, part) in term_parts(term).into_iter().enumerate() {
            let even = reference.space.even != part.op.odd();
            if sector.even == even && triangle(2 * j, 2 * part.op.rank(), 2 * sector.big_j) {
                cols.push((ti, pi, part));
            }
        }
    }
    cols
}

/// Integrates the dressed exchange over `kgrid`, returning per-term absorption
/// vectors. With `λ = 0` this is the bare one-photon exchange.
pub fn integrate_photon_family(
    ctx: &PhotonContext,
    reference: &Reference,
    sectors: &[PhotonSector],
    kgrid: &KGrid,
) -> Result<PhotonFamily> {
    let b = ctx.basis;
    let c = b.c;
    let n = b.len();
    let j = reference.space.big_j;
    let e = reference.energy;
    let mut keys = Vec::new();
    for sector in sectors {
        for (_, _, part) in sector_columns(ctx, reference, sector) {
            keys.push((sector.big_j, part.op.rank()));
        }
    }
    keys.sort();
    keys.dedup();
    let rec = Recoupling::new(b, j, &keys, &ctx.sixj);
    let columns: Vec<_> = sectors.iter().map(|s| sector_columns(ctx, reference, s)).collect();
    let poles = sector_poles(reference, sectors, c);
    for &p in &poles {
        check_clearance(kgrid, p)?;
    }
    let mut acc: Vec<DMatrix<f64>> = vec![DMatrix::zeros(n, n); ctx.terms.len()];

    // Straight `J` matrix of U(2) G T(1) ρ_I for the selected levels at momentum k.
    // `only` restricts to a single level (pole residues); `den` maps a level to its
    // resolvent factor.
    let contribute = |tables: &VertexTables,
                      sector: &PhotonSector,
                      cols: &[(usize, usize, VertexPart)],
                      den: &dyn Fn(usize, usize) -> f64,
                      out: &mut [DMatrix<f64>]| {
        let emitted: Vec<DMatrix<f64>> = cols
            .iter()
            .map(|&(ti, pi, part)| rec.emit(&tables.terms[ti].1[pi], &reference.straight, sector.big_j, part.op.rank()))
            .collect();
        let mut psi: Vec<DMatrix<f64>> = vec![DMatrix::zeros(n, n); cols.len()];
        for (bi, blk) in sector.blocks.iter().enumerate() {
            let d = blk.space.dim();
            let mut src = DMatrix::zeros(d, cols.len());
            for (ci, a) in emitted.iter().enumerate() {
                src.set_column(ci, &DVector::from_vec(blk.space.from_straight(b, a)));
            }
            let mut proj = blk.states.transpose() * src;
            for i in 0..d {
                let f = den(bi, i);
                proj.row_mut(i).scale_mut(f);
            }
            let back = &blk.states * proj;
            for (ci, p) in psi.iter_mut().enumerate() {
                *p += blk.space.to_straight(b, back.column(ci).as_slice());
            }
        }
        let angular = 2.0 * parity_sign(j as i64 - sector.big_j as i64) / (2 * j + 1) as f64;
        for ((ti, pi, part), p) in cols.iter().zip(&psi) {
            let (coef, mats) = &tables.terms[*ti];
            let w = rec.absorb(&mats[*pi], p, sector.big_j, part.op.rank());
            out[*ti] += w * (coef * part.phase * angular);
        }
    };

    for (&k, &wk) in kgrid.nodes.iter().zip(&kgrid.weights) {
        let tables = ctx.tables(k);
        let mut node = vec![DMatrix::zeros(n, n); ctx.terms.len()];
        for (sector, cols) in sectors.iter().zip(&columns) {
            if cols.is_empty() {
                continue;
            }
            let den = |bi: usize, i: usize| 1.0 / (e - sector.blocks[bi].levels[i] - c * k);
            contribute(&tables, sector, cols, &den, &mut node);
        }
        for (a, m) in acc.iter_mut().zip(node) {
            *a += m * wk;
        }
    }

    // Principal value: remove `N_i(k_i) χ_i(k)/(c(k_i − k))` from the node sum and
    // add its analytic value, one residue per level below E_I.
    for &kp in &poles {
        let tables = ctx.tables(kp);
        let chi_sum: f64 = kgrid
            .nodes
            .iter()
            .zip(&kgrid.weights)
            .map(|(&k, &w)| {
                let u = (k - kp) / kp;
                w / (1.0 + u * u) / (kp - k)
            })
            .sum();
        let scale = (chi_principal_value() - chi_sum) / c;
        for (sector, cols) in sectors.iter().zip(&columns) {
            if cols.is_empty() {
                continue;
            }
            let den = |bi: usize, i: usize| {
                let kl = (e - sector.blocks[bi].levels[i]) / c;
                if kl > MIN_POLE && ((kl - kp) / kp).abs() < 1e-12 {
                    scale
                } else {
                    0.0
                }
            };
            contribute(&tables, sector, cols, &den, &mut acc);
        }
    }

    let w = acc.iter().map(|m| DVector::from_vec(reference.space.from_straight(b, m))).collect();
    Ok(PhotonFamily { terms: ctx.terms.clone(), w, k_nodes: kgrid.len(), poles })
}

/// Continues the Coulomb iteration after absorption:
/// `(E0 − H0) ρ_G = Q[W + V ρ_G] − ρ_G V_I − ρ_I V_G` with
/// `V_G = ⟨a|W⟩ + ⟨a|V ρ_G⟩`. Returns the Q-space pair function and `V_G` (Hartree).
pub fn absorb_photon(reference: &Reference, w: &DVector<f64>) -> Result<(PairFunction, f64)> {
    let model = &reference.model;
    let a = reference.index;
    let d = model.dim();
    let v_i = reference.energy - reference.e0;
    let q: Vec<usize> = (0..d).filter(|&i| i != a).collect();
    let m = q.len();
    // Unknowns ρ_G restricted to Q.
    let mut lhs = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    for (ii, &i) in q.iter().enumerate() {
        rhs[ii] = w[i] - reference.rho[i] * w[a];
        for (jj, &jx) in q.iter().enumerate() {
            let mut x = -model.v[(i, jx)] + reference.rho[i] * model.v[(a, jx)];
            if i == jx {
                x += reference.e0 - model.h0[i] + v_i;
            }
            lhs[(ii, jj)] = x;
        }
    }
    let sol = lhs.lu().solve(&rhs).ok_or(Error::SingularResolvent { index: a, energy: reference.e0 })?;
    let mut full = DVector::zeros(d);
    for (ii, &i) in q.iter().enumerate() {
        full[i] = sol[ii];
    }
    let v_g = w[a] + (model.v.row(a) * &full)[(0, 0)];
    // Residual of the defining equation on Q.
    let vr = &model.v * &full;
    let mut residual: f64 = 0.0;
    for &i in &q {
        let r = (reference.e0 - model.h0[i]) * full[i] - (w[i] + vr[i] - full[i] * v_i - reference.rho[i] * v_g);
        residual = residual.max(r.abs());
    }
    let pf = PairFunction {
        model: vec![a],
        reference_energies: vec![reference.e0],
        coefficients: DMatrix::from_column_slice(d, 1, full.as_slice()),
        iterations: 1,
        residual,
    };
    Ok((pf, v_g))
}

/// Geometric estimate of the multipoles beyond the last one from its two last
/// increments; the last increment itself when they do not shrink.
pub fn l_tail_estimate(increments: &[f64]) -> f64 {
    match increments {
        [.., a, b] if *a != 0.0 => {
            let q = b / a;
            if q.abs() < 1.0 {
                b * q / (1.0 - q)
            } else {
                *b
            }
        }
        [.., b] => *b,
        [] => 0.0,
    }
}
