//! Finite matrix models for the Bloch equation and the fold expansion.
//!
//! A model is `H = H0 + V` with diagonal `H0` and a model space spanned by a subset of
//! the basis vectors. Wave operators are stored as `d × d_P` matrices whose columns are
//! the images of the model states; column `α` carries the energy `E_α = H0[α]`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::diffcalc::{divided_difference, EnergyFunction};
use crate::error::{Error, Result};

const BLOCH_TOL: f64 = 1e-12;
const BLOCH_MAX_ITER: usize = 10_000;
const RESOLVENT_THRESHOLD: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct MatrixModel {
    pub h0: DVector<f64>,
    pub v: DMatrix<f64>,
    pub model: Vec<usize>,
}

impl MatrixModel {
    pub fn new(h0: DVector<f64>, v: DMatrix<f64>, model: Vec<usize>) -> Result<Self> {
        let d = h0.len();
        if v.nrows() != d || v.ncols() != d {
            return Err(Error::InvalidModel(format!("V is {}x{}, H0 has {d}", v.nrows(), v.ncols())));
        }
        if (&v - v.transpose()).amax() > 1e-14 {
            return Err(Error::InvalidModel("V is not symmetric".into()));
        }
        if model.is_empty() {
            return Err(Error::InvalidModel("empty model space".into()));
        }
        for (i, &m) in model.iter().enumerate() {
            if m >= d || model[..i].contains(&m) {
                return Err(Error::InvalidModel(format!("bad model index {m}")));
            }
        }
        Ok(Self { h0, v, model })
    }

    pub fn dim(&self) -> usize {
        self.h0.len()
    }

    pub fn model_dim(&self) -> usize {
        self.model.len()
    }

    pub fn is_model(&self, i: usize) -> bool {
        self.model.contains(&i)
    }

    /// Unperturbed energies of the model states, in model order.
    pub fn model_energies(&self) -> Vec<f64> {
        self.model.iter().map(|&m| self.h0[m]).collect()
    }

    /// Same model with `V` scaled by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self { h0: self.h0.clone(), v: &self.v * lambda, model: self.model.clone() }
    }

    pub fn hamiltonian(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.h0) + &self.v
    }

    /// `d × d_P` embedding of the model states.
    pub fn model_embedding(&self) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.dim(), self.model_dim());
        for (a, &m) in self.model.iter().enumerate() {
            e[(m, a)] = 1.0;
        }
        e
    }
}

#[derive(Clone, Debug)]
pub struct Projectors {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

pub fn build_projectors(model: &MatrixModel) -> Projectors {
    let d = model.dim();
    let mut p = DMatrix::zeros(d, d);
    for &m in &model.model {
        p[(m, m)] = 1.0;
    }
    let q = DMatrix::identity(d, d) - &p;
    Projectors { p, q }
}

/// `Γ_Q(E) = Q / (E - H0)`.
pub fn resolvent(e: f64, model: &MatrixModel, proj: &Projectors) -> Result<DMatrix<f64>> {
    let d = model.dim();
    let mut g = DMatrix::zeros(d, d);
    for i in 0..d {
        if proj.q[(i, i)] == 0.0 {
            continue;
        }
        let den = e - model.h0[i];
        if den.abs() < RESOLVENT_THRESHOLD {
            return Err(Error::SingularResolvent { index: i, energy: e });
        }
        g[(i, i)] = 1.0 / den;
    }
    Ok(g)
}

/// Effective interaction over the model space.
#[derive(Clone, Debug)]
pub struct EffectiveInteraction {
    pub matrix: DMatrix<f64>,
    /// Unperturbed energies labelling rows/columns, used for fold bookkeeping.
    pub energies: Vec<f64>,
}

impl EffectiveInteraction {
    /// `P H0 P + V_eff`.
    pub fn heff(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(self.energies.clone())) + &self.matrix
    }

    /// Eigenvalues of the (non-symmetric) effective Hamiltonian, ascending.
    pub fn heff_eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.heff().complex_eigenvalues().iter().map(|z| z.re).collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

#[derive(Clone, Debug)]
pub struct WaveOperatorMatrix {
    pub matrix: DMatrix<f64>,
    pub msc_free: bool,
}

#[derive(Clone, Debug)]
pub struct BlochSolution {
    pub omega: WaveOperatorMatrix,
    pub veff: EffectiveInteraction,
    pub iterations: usize,
    pub residual: f64,
}

/// Iterates `Ω ← P + Γ_Q (VΩ − Ω V_eff)` with `V_eff = P V Ω P`.
pub fn solve_bloch_instantaneous(model: &MatrixModel) -> Result<(WaveOperatorMatrix, EffectiveInteraction)> {
    let sol = solve_bloch_detailed(model)?;
    Ok((sol.omega, sol.veff))
}

pub fn solve_bloch_detailed(model: &MatrixModel) -> Result<BlochSolution> {
    let d = model.dim();
    let dp = model.model_dim();
    let ep = model.model_energies();
    for i in (0..d).filter(|&i| !model.is_model(i)) {
        for &e in &ep {
            if (e - model.h0[i]).abs() < RESOLVENT_THRESHOLD {
                return Err(Error::SingularResolvent { index: i, energy: e });
            }
        }
    }
    let mut omega = model.model_embedding();
    let mut damping = 1.0;
    let mut last_step = f64::INFINITY;
    for it in 1..=BLOCH_MAX_ITER {
        let veff = p_block(model, &(&model.v * &omega));
        let rhs = &model.v * &omega - &omega * &veff;
        let mut step: f64 = 0.0;
        let mut next = omega.clone();
        for i in (0..d).filter(|&i| !model.is_model(i)) {
            for a in 0..dp {
                let target = rhs[(i, a)] / (ep[a] - model.h0[i]);
                let delta = target - omega[(i, a)];
                step = step.max(delta.abs());
                next[(i, a)] = omega[(i, a)] + damping * delta;
            }
        }
        omega = next;
        if step > last_step && damping == 1.0 {
            damping = 0.5;
        }
        last_step = step;
        if !step.is_finite() {
            break;
        }
        if step < BLOCH_TOL {
            let veff = p_block(model, &(&model.v * &omega));
            let residual = bloch_residual(model, &omega, &veff);
            if residual < BLOCH_TOL * 10.0 {
                return Ok(BlochSolution {
                    omega: WaveOperatorMatrix { matrix: omega, msc_free: false },
                    veff: EffectiveInteraction { matrix: veff, energies: ep },
                    iterations: it,
                    residual,
                });
            }
        }
        if it == BLOCH_MAX_ITER {
            return Err(Error::NoConvergence { iterations: it, residual: step });
        }
    }
    Err(Error::NoConvergence { iterations: BLOCH_MAX_ITER, residual: last_step })
}

fn p_block(model: &MatrixModel, m: &DMatrix<f64>) -> DMatrix<f64> {
    let dp = model.model_dim();
    DMatrix::from_fn(dp, m.ncols(), |a, b| m[(model.model[a], b)])
}

/// Max-norm residual of `(E_α − H0) QΩ_α = Q(VΩ − ΩV_eff)_α`.
pub fn bloch_residual(model: &MatrixModel, omega: &DMatrix<f64>, veff: &DMatrix<f64>) -> f64 {
    let ep = model.model_energies();
    let rhs = &model.v * omega - omega * veff;
    let mut r: f64 = 0.0;
    for i in (0..model.dim()).filter(|&i| !model.is_model(i)) {
        for (a, &e) in ep.iter().enumerate() {
            r = r.max(((e - model.h0[i]) * omega[(i, a)] - rhs[(i, a)]).abs());
        }
    }
    r
}

/// Exact eigenvalues of `H0 + V` whose eigenvectors have the largest model-space
/// weight, ascending.
pub fn matched_exact_eigenvalues(model: &MatrixModel) -> Vec<f64> {
    let eig = SymmetricEigen::new(model.hamiltonian());
    let mut weighted: Vec<(f64, f64)> = (0..model.dim())
        .map(|k| {
            let w: f64 = model.model.iter().map(|&m| eig.eigenvectors[(m, k)].powi(2)).sum();
            (w, eig.eigenvalues[k])
        })
        .collect();
    weighted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut ev: Vec<f64> = weighted[..model.model_dim()].iter().map(|x| x.1).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Model-space-contribution-free wave operator `Ω̄(E) = (1 − Γ_Q(E) V)⁻¹ P` as a
/// `d × d` energy function; columns outside the model space vanish.
pub struct MscFreeWaveOperator<'a> {
    model: &'a MatrixModel,
    proj: Projectors,
    /// Left-multiplies the result (identity for Ω̄, `V` for the reaction operator).
    left: Option<DMatrix<f64>>,
}

impl<'a> MscFreeWaveOperator<'a> {
    pub fn new(model: &'a MatrixModel) -> Self {
        Self { model, proj: build_projectors(model), left: None }
    }

    /// `V̄_R(E) = V Ω̄(E)`, so that `QΩ̄ = Γ_Q V̄_R`.
    pub fn reaction(model: &'a MatrixModel) -> Self {
        Self { model, proj: build_projectors(model), left: Some(model.v.clone()) }
    }

    /// Taylor coefficient `(1/m!) dᵐΓ_Q/dEᵐ`.
    fn gamma_coeff(&self, e: f64, m: usize) -> DMatrix<f64> {
        let d = self.model.dim();
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        DMatrix::from_fn(d, d, |i, j| {
            if i == j && self.proj.q[(i, i)] != 0.0 {
                sign / (e - self.model.h0[i]).powi(m as i32 + 1)
            } else {
                0.0
            }
        })
    }

    fn finish(&self, m: DMatrix<f64>) -> DMatrix<f64> {
        match &self.left {
            Some(l) => l * m,
            None => m,
        }
    }
}

impl EnergyFunction for MscFreeWaveOperator<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn eval(&self, e: f64) -> DMatrix<f64> {
        self.taylor_coeff(e, 0).expect("closed form")
    }

    fn taylor_coeff(&self, e: f64, n: usize) -> Option<DMatrix<f64>> {
        let d = self.model.dim();
        let m0 = DMatrix::identity(d, d) - self.gamma_coeff(e, 0) * &self.model.v;
        let lu = m0.lu();
        let mut xs = vec![lu.solve(&self.proj.p)?];
        for k in 1..=n {
            let mut rhs = DMatrix::zeros(d, d);
            for m in 1..=k {
                rhs += self.gamma_coeff(e, m) * &self.model.v * &xs[k - m];
            }
            xs.push(lu.solve(&rhs)?);
        }
        Some(self.finish(xs.swap_remove(n)))
    }
}

/// Fold sum `Σ_{n=1}^{n_max} δⁿF (V_eff)ⁿ` for an energy-dependent `F` whose columns are
/// indexed by model states.
pub fn fold_sum(
    f: &dyn EnergyFunction,
    model: &MatrixModel,
    veff: &DMatrix<f64>,
    n_max: usize,
) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(model.dim(), model.model_dim());
    for n in 1..=n_max {
        out += fold_term(f, model, &vec![veff; n]);
    }
    out
}

/// Single fold term `δⁿF · X₁ X₂ ⋯ Xₙ`. Column `α` threads the energies
/// `(E_{β1}, …, E_{βn}, E_α)` along each path `β1 → … → βn → α`, with `F` taken in
/// column `β1`.
pub fn fold_term(f: &dyn EnergyFunction, model: &MatrixModel, factors: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let dp = model.model_dim();
    let ep = model.model_energies();
    let n = factors.len();
    let mut out = DMatrix::zeros(model.dim(), dp);
    if n == 0 {
        return out;
    }
    for alpha in 0..dp {
        let mut path = vec![0usize; n];
        loop {
            let mut weight = factors[n - 1][(path[n - 1], alpha)];
            for (i, w) in path.windows(2).enumerate() {
                weight *= factors[i][(w[0], w[1])];
            }
            if weight != 0.0 {
                let mut energies: Vec<f64> = path.iter().map(|&b| ep[b]).collect();
                energies.push(ep[alpha]);
                let dd = divided_difference(f, &energies);
                let col = model.model[path[0]];
                for i in 0..model.dim() {
                    out[(i, alpha)] += dd[(i, col)] * weight;
                }
            }
            if !next_path(&mut path, dp) {
                break;
            }
        }
    }
    out
}

fn next_path(path: &mut [usize], base: usize) -> bool {
    for p in path.iter_mut().rev() {
        *p += 1;
        if *p < base {
            return true;
        }
        *p = 0;
    }
    false
}

fn model_columns(model: &MatrixModel, f: &dyn EnergyFunction) -> DMatrix<f64> {
    let ep = model.model_energies();
    let mut out = DMatrix::zeros(model.dim(), model.model_dim());
    for (a, &m) in model.model.iter().enumerate() {
        out.set_column(a, &f.eval(ep[a]).column(m));
    }
    out
}

#[derive(Clone, Debug)]
pub struct FoldReport {
    /// Max-norm deviation after truncating the fold series at `n = 0, 1, …, n_max`.
    pub deviations: Vec<f64>,
}

impl FoldReport {
    pub fn final_deviation(&self) -> f64 {
        *self.deviations.last().unwrap()
    }
}

/// Compares `ΩP` from the Bloch solver with `Ω̄P + Σ δⁿΩ̄ (V_eff)ⁿ`.
pub fn fold_series_check(model: &MatrixModel, n_max: usize) -> Result<FoldReport> {
    let sol = solve_bloch_detailed(model)?;
    let omega_bar = MscFreeWaveOperator::new(model);
    let base = model_columns(model, &omega_bar);
    let mut deviations = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let series = &base + fold_sum(&omega_bar, model, &sol.veff.matrix, n);
        deviations.push((&series - &sol.omega.matrix).amax());
    }
    Ok(FoldReport { deviations })
}

/// Compares `QΩP` with `QΩ̄P − Γ_Q Ω V_eff + Γ_Q Σ δⁿV̄_R (V_eff)ⁿ`.
pub fn eq116_check(model: &MatrixModel, n_max: usize) -> Result<FoldReport> {
    let sol = solve_bloch_detailed(model)?;
    let proj = build_projectors(model);
    let ep = model.model_energies();
    let omega_bar = MscFreeWaveOperator::new(model);
    let reaction = MscFreeWaveOperator::reaction(model);
    let lhs = &proj.q * &sol.omega.matrix;
    let q_bar = &proj.q * model_columns(model, &omega_bar);
    let omega_veff = &sol.omega.matrix * &sol.veff.matrix;
    let mut deviations = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let folds = fold_sum(&reaction, model, &sol.veff.matrix, n);
        let mut rhs = q_bar.clone();
        for (a, &e) in ep.iter().enumerate() {
            let g = resolvent(e, model, &proj)?;
            let col = &g * (folds.column(a) - omega_veff.column(a));
            let updated = rhs.column(a) + col;
            rhs.set_column(a, &updated);
        }
        deviations.push((&rhs - &lhs).amax());
    }
    Ok(FoldReport { deviations })
}

/// `max |QΩ_α − Γ_Q(E_α) V_R,α|` with `V_R = VΩ − ΩV_eff`.
pub fn reaction_identity_residual(model: &MatrixModel) -> Result<f64> {
    let sol = solve_bloch_detailed(model)?;
    let proj = build_projectors(model);
    let vr = &model.v * &sol.omega.matrix - &sol.omega.matrix * &sol.veff.matrix;
    let lhs = &proj.q * &sol.omega.matrix;
    let mut r: f64 = 0.0;
    for (a, &e) in model.model_energies().iter().enumerate() {
        let g = resolvent(e, model, &proj)?;
        r = r.max((&g * vr.column(a) - lhs.column(a)).amax());
    }
    Ok(r)
}

/// Rayleigh–Schrödinger orders of the Bloch solution: `Ω⁽ᵐ⁾` and `V_eff⁽ᵐ⁾` for
/// `m = 0..=max_order` (`V_eff⁽⁰⁾ = 0`).
pub fn bloch_orders(model: &MatrixModel, max_order: usize) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let dp = model.model_dim();
    let ep = model.model_energies();
    let mut omega = vec![model.model_embedding()];
    let mut veff = vec![DMatrix::zeros(dp, dp)];
    for m in 1..=max_order {
        veff.push(p_block(model, &(&model.v * &omega[m - 1])));
        let mut rhs = &model.v * &omega[m - 1];
        for k in 1..m {
            rhs -= &omega[m - k] * &veff[k];
        }
        let mut next = DMatrix::zeros(model.dim(), dp);
        for i in (0..model.dim()).filter(|&i| !model.is_model(i)) {
            for a in 0..dp {
                next[(i, a)] = rhs[(i, a)] / (ep[a] - model.h0[i]);
            }
        }
        omega.push(next);
    }
    (omega, veff)
}

/// Order-`j` part of the MSC-free wave operator, `(Γ_Q(E) V)ʲ P`, optionally
/// left-multiplied by `V`.
struct MscFreeOrder<'a> {
    model: &'a MatrixModel,
    order: usize,
    left_v: bool,
}

impl EnergyFunction for MscFreeOrder<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn eval(&self, e: f64) -> DMatrix<f64> {
        self.taylor_coeff(e, 0).expect("closed form")
    }

    fn taylor_coeff(&self, e: f64, n: usize) -> Option<DMatrix<f64>> {
        let d = self.model.dim();
        let proj = build_projectors(self.model);
        // gv[m] = (1/m!) dᵐ(Γ_Q V)/dEᵐ
        let gv: Vec<DMatrix<f64>> = (0..=n)
            .map(|m| {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                DMatrix::from_fn(d, d, |i, j| {
                    if proj.q[(i, i)] != 0.0 {
                        sign * self.model.v[(i, j)] / (e - self.model.h0[i]).powi(m as i32 + 1)
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        // t[k] = Taylor coefficient k of the current power, starting from P.
        let mut t: Vec<DMatrix<f64>> = (0..=n).map(|k| if k == 0 { proj.p.clone() } else { DMatrix::zeros(d, d) }).collect();
        for _ in 0..self.order {
            let next = (0..=n)
                .map(|k| (0..=k).fold(DMatrix::zeros(d, d), |acc, m| acc + &gv[m] * &t[k - m]))
                .collect();
            t = next;
        }
        let out = t.swap_remove(n);
        Some(if self.left_v { &self.model.v * out } else { out })
    }
}

/// Compositions of `total` into `parts` positive integers.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in 1..=total.saturating_sub(parts - 1) {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Order-`m` part of `Σ_{n=1}^{n_folds} δⁿF (V_eff)ⁿ`, where `f_order(j)` is the order-`j`
/// part of `F`.
fn fold_series_order<'a>(
    model: &'a MatrixModel,
    veff: &[DMatrix<f64>],
    n_folds: usize,
    m: usize,
    f_order: impl Fn(usize) -> Option<MscFreeOrder<'a>>,
) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(model.dim(), model.model_dim());
    for n in 1..=n_folds {
        for j in 0..m {
            let Some(f) = f_order(j) else { continue };
            for comp in compositions(m - j, n) {
                let factors: Vec<&DMatrix<f64>> = comp.iter().map(|&k| &veff[k]).collect();
                out += fold_term(&f, model, &factors);
            }
        }
    }
    out
}

/// Checks the fold expansion order by order in `V`: with `n_folds` fold terms the
/// identity is exact through order `n_folds + 1`. Returns the deviation per order.
pub fn fold_identity_by_order(model: &MatrixModel, n_folds: usize) -> FoldReport {
    let max_order = n_folds + 1;
    let (omega, veff) = bloch_orders(model, max_order);
    let mut deviations = Vec::with_capacity(max_order + 1);
    for m in 0..=max_order {
        let bar = MscFreeOrder { model, order: m, left_v: false };
        let mut series = model_columns(model, &bar);
        series += fold_series_order(model, &veff, n_folds, m, |j| {
            Some(MscFreeOrder { model, order: j, left_v: false })
        });
        deviations.push((&series - &omega[m]).amax());
    }
    FoldReport { deviations }
}

/// Order-by-order version of [`eq116_check`], exact through order `n_folds + 1`.
pub fn eq116_by_order(model: &MatrixModel, n_folds: usize) -> Result<FoldReport> {
    let max_order = n_folds + 1;
    let proj = build_projectors(model);
    let ep = model.model_energies();
    let (omega, veff) = bloch_orders(model, max_order);
    let mut deviations = Vec::with_capacity(max_order + 1);
    for m in 0..=max_order {
        let lhs = &proj.q * &omega[m];
        let bar = MscFreeOrder { model, order: m, left_v: false };
        let mut rhs = &proj.q * model_columns(model, &bar);
        // V̄_R at order j is V Ω̄ at order j − 1.
        let mut inner = fold_series_order(model, &veff, n_folds, m, |j| {
            (j >= 1).then(|| MscFreeOrder { model, order: j - 1, left_v: true })
        });
        for k in 1..m {
            inner -= &omega[m - k] * &veff[k];
        }
        for (a, &e) in ep.iter().enumerate() {
            let g = resolvent(e, model, &proj)?;
            let updated = rhs.column(a) + &g * inner.column(a);
            rhs.set_column(a, &updated);
        }
        deviations.push((&rhs - &lhs).amax());
    }
    Ok(FoldReport { deviations })
}
