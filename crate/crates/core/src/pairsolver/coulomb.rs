//! Instantaneous Coulomb pair equation.

use nalgebra::{DMatrix, DVector};

use super::basis::{swap_phase, OrbitalBasis, PairSpace, SixJCache};
use crate::angular::reduced_c;
use crate::error::{Error, Result};
use crate::modelspace::{bloch_residual, EffectiveInteraction, MatrixModel};
use crate::radial::slater_kernel;

/// Smallest `|E_a − ε_r − ε_s|` accepted for a Q-space pair.
pub const DENOMINATOR_THRESHOLD: f64 = 1e-10;

/// Slater integrals `R^L(pq; rs) = ρ_pqᵀ K_L ρ_rs` over one orbital basis.
///
/// Densities of all unordered pairs are stored once; `y[L] = K_L · D` turns each
/// integral into a single dot product.
pub struct CoulombIntegrals {
    n: usize,
    densities: DMatrix<f64>,
    potentials: Vec<Option<DMatrix<f64>>>,
    /// `⟨κ_p||C^L||κ_q⟩` indexed by `[L][p][q]`.
    angular: Vec<DMatrix<f64>>,
    sixj: SixJCache,
}

impl CoulombIntegrals {
    pub fn new(basis: &OrbitalBasis) -> Self {
        let n = basis.len();
        let nf = basis.grid.fine.len();
        let l_orb = basis.orbitals.iter().map(|o| o.l()).max().unwrap_or(0);
        let mut densities = DMatrix::zeros(nf, n * (n + 1) / 2);
        for p in 0..n {
            for q in p..n {
                let rho = basis.orbitals[p].density(&basis.orbitals[q]);
                densities.set_column(pair_index(n, p, q), &DVector::from_vec(rho));
            }
        }
        let mut potentials = Vec::new();
        let mut angular = Vec::new();
        for big_l in 0..=2 * l_orb + 1 {
            let ang = DMatrix::from_fn(n, n, |p, q| reduced_c(basis.orbitals[p].kappa, big_l, basis.orbitals[q].kappa));
            potentials.push(if ang.amax() > 0.0 { Some(slater_kernel(&basis.grid, big_l) * &densities) } else { None });
            angular.push(ang);
        }
        CoulombIntegrals { n, densities, potentials, angular, sixj: SixJCache::default() }
    }

    pub fn slater(&self, big_l: u32, p: usize, q: usize, r: usize, s: usize) -> f64 {
        let Some(Some(y)) = self.potentials.get(big_l as usize) else { return 0.0 };
        self.densities.column(pair_index(self.n, p, q)).dot(&y.column(pair_index(self.n, r, s)))
    }

    /// Coupled `⟨(r s) J|1/r₁₂|(t u) J⟩` between straight products.
    pub fn coupled(&self, basis: &OrbitalBasis, r: usize, s: usize, t: usize, u: usize, big_j: u32) -> f64 {
        let tj = [basis.two_j(r), basis.two_j(s), basis.two_j(t), basis.two_j(u)];
        let mut sum = 0.0;
        for (big_l, ang) in self.angular.iter().enumerate() {
            let a = ang[(r, t)] * ang[(s, u)];
            if a == 0.0 {
                continue;
            }
            let f = self.sixj.two_electron(tj[0], tj[1], tj[2], tj[3], 2 * big_j, big_l as u32);
            if f != 0.0 {
                sum += f * a * self.slater(big_l as u32, r, t, s, u);
            }
        }
        sum
    }

    /// Matrix of `1/r₁₂` over the (anti)symmetrized states of `space`.
    pub fn pair_matrix(&self, basis: &OrbitalBasis, space: &PairSpace) -> DMatrix<f64> {
        let d = space.dim();
        let sigma = space.exchange.sign();
        let j = space.big_j;
        let mut v = DMatrix::zeros(d, d);
        for i in 0..d {
            let (r, s) = space.pairs[i];
            for k in i..d {
                let (t, u) = space.pairs[k];
                let direct = self.coupled(basis, r, s, t, u, j);
                let exchange = self.coupled(basis, r, s, u, t, j) * swap_phase(basis, t, u, j);
                let x = 2.0 * space.norms[i] * space.norms[k] * (direct + sigma * exchange);
                v[(i, k)] = x;
                v[(k, i)] = x;
            }
        }
        v
    }
}

fn pair_index(n: usize, p: usize, q: usize) -> usize {
    let (p, q) = (p.min(q), p.max(q));
    p * (2 * n + 1 - p) / 2 + (q - p)
}

/// Pair-space model with `V = λ/r₁₂` and the listed pairs as model states.
pub fn pair_model(
    basis: &OrbitalBasis,
    space: &PairSpace,
    ints: &CoulombIntegrals,
    model_pairs: &[(usize, usize)],
    lambda: f64,
) -> Result<MatrixModel> {
    let model = model_pairs
        .iter()
        .map(|&(a, b)| {
            space.position(a, b).ok_or_else(|| Error::InvalidModel(format!("pair ({a}, {b}) is not in the J = {} space", space.big_j)))
        })
        .collect::<Result<Vec<_>>>()?;
    MatrixModel::new(DVector::from_vec(space.h0.clone()), ints.pair_matrix(basis, space) * lambda, model)
}

#[derive(Clone, Copy, Debug)]
pub struct PairOptions {
    /// Max-norm change of the coefficients at convergence.
    pub tol: f64,
    pub max_iter: usize,
    /// DIIS history length; 0 gives plain Jacobi iteration.
    pub diis: usize,
}

impl Default for PairOptions {
    fn default() -> Self {
        PairOptions { tol: 1e-12, max_iter: 400, diis: 8 }
    }
}

/// Correlated pair functions `ρ_a = |a⟩ + Σ_{i∈Q} s_{ia} |i⟩` for each model state.
#[derive(Clone, Debug)]
pub struct PairFunction {
    /// Pair-space indices of the model states.
    pub model: Vec<usize>,
    /// `E_a = ε_a + ε_b` per model state.
    pub reference_energies: Vec<f64>,
    /// `d × d_P`; rows of model states are zero.
    pub coefficients: DMatrix<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl PairFunction {
    /// `Ω = P + S` as a `d × d_P` matrix.
    pub fn wave_operator(&self) -> DMatrix<f64> {
        let mut w = self.coefficients.clone();
        for (a, &m) in self.model.iter().enumerate() {
            w[(m, a)] = 1.0;
        }
        w
    }
}

fn check_denominators(space: &PairSpace, model: &MatrixModel) -> Result<()> {
    for e in model.model_energies() {
        for i in (0..model.dim()).filter(|&i| !model.is_model(i)) {
            if (e - model.h0[i]).abs() < DENOMINATOR_THRESHOLD {
                let (r, s) = space.pairs[i];
                return Err(Error::SingularDenominator { r, s });
            }
        }
    }
    Ok(())
}

/// One Jacobi sweep `s_{ia} ← [(VΩ)_{ia} − (S V_eff)_{ia}] / (E_a − ε_i)` from `Ω = P + S`.
pub fn pair_update(model: &MatrixModel, omega: &DMatrix<f64>) -> DMatrix<f64> {
    let ep = model.model_energies();
    let vo = &model.v * omega;
    let veff = DMatrix::from_fn(model.model_dim(), omega.ncols(), |a, b| vo[(model.model[a], b)]);
    let mut s = omega.clone();
    for &m in &model.model {
        s.row_mut(m).fill(0.0);
    }
    let rhs = &vo - &s * &veff;
    let mut next = DMatrix::zeros(model.dim(), model.model_dim());
    for i in (0..model.dim()).filter(|&i| !model.is_model(i)) {
        for (a, &e) in ep.iter().enumerate() {
            next[(i, a)] = rhs[(i, a)] / (e - model.h0[i]);
        }
    }
    next
}

/// Extrapolates from stored iterates and their updates (Pulay).
struct Diis {
    depth: usize,
    xs: Vec<DVector<f64>>,
    errs: Vec<DVector<f64>>,
}

impl Diis {
    fn push(&mut self, x: DVector<f64>, err: DVector<f64>) -> Option<DVector<f64>> {
        if self.depth == 0 {
            return None;
        }
        if self.xs.len() == self.depth {
            self.xs.remove(0);
            self.errs.remove(0);
        }
        self.xs.push(x);
        self.errs.push(err);
        let m = self.xs.len();
        if m < 2 {
            return None;
        }
        let mut b = DMatrix::zeros(m + 1, m + 1);
        for i in 0..m {
            for j in 0..m {
                b[(i, j)] = self.errs[i].dot(&self.errs[j]);
            }
            b[(i, m)] = -1.0;
            b[(m, i)] = -1.0;
        }
        let scale = (0..m).map(|i| b[(i, i)]).fold(0.0, f64::max);
        if scale == 0.0 {
            return None;
        }
        for i in 0..m {
            for j in 0..m {
                b[(i, j)] /= scale;
            }
        }
        let mut rhs = DVector::zeros(m + 1);
        rhs[m] = -1.0;
        let c = b.lu().solve(&rhs)?;
        let mut out = DVector::zeros(self.xs[0].len());
        for i in 0..m {
            out += (&self.xs[i] + &self.errs[i]) * c[i];
        }
        out.iter().all(|x| x.is_finite()).then_some(out)
    }
}

/// Iterates the Coulomb pair equation to self-consistency.
pub fn solve_coulomb_pair(
    space: &PairSpace,
    model: &MatrixModel,
    opts: &PairOptions,
) -> Result<(PairFunction, EffectiveInteraction)> {
    check_denominators(space, model)?;
    let (d, dp) = (model.dim(), model.model_dim());
    let embed = model.model_embedding();
    let mut s = DMatrix::<f64>::zeros(d, dp);
    let mut diis = Diis { depth: opts.diis, xs: Vec::new(), errs: Vec::new() };
    let mut step = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let next = pair_update(model, &(&embed + &s));
        let delta = &next - &s;
        step = delta.amax();
        if !step.is_finite() {
            break;
        }
        if step < opts.tol {
            let omega = &embed + &next;
            let veff = p_block(model, &(&model.v * &omega));
            let residual = bloch_residual(model, &omega, &veff);
            let pf = PairFunction {
                model: model.model.clone(),
                reference_energies: model.model_energies(),
                coefficients: next,
                iterations: it,
                residual,
            };
            return Ok((pf, EffectiveInteraction { matrix: veff, energies: model.model_energies() }));
        }
        let flat = |m: &DMatrix<f64>| DVector::from_column_slice(m.as_slice());
        s = match diis.push(flat(&s), flat(&delta)) {
            Some(x) => DMatrix::from_column_slice(d, dp, x.as_slice()),
            None => next,
        };
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual: step })
}

fn p_block(model: &MatrixModel, m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(model.model_dim(), m.ncols(), |a, b| m[(model.model[a], b)])
}
