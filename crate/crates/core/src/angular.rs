//! Angular-momentum algebra and the single-electron photon potentials.
//!
//! Conventions: Condon–Shortley phases, `C^l = √(4π/(2l+1)) Y^l`, reduced matrix
//! elements in the Wigner–Eckart form
//! `⟨j m|T^K_q|j' m'⟩ = (-1)^{j-m} (j K j'; -m q m') ⟨j||T^K||j'⟩`.
//! Spinors are `ψ = (1/r)(P Ω_{κm}, i Q Ω_{-κm})`.
//!
//! Operators containing `α` have purely imaginary reduced elements between such
//! spinors. [`ReducedMatrixElement::value`] holds the coefficient of `i`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{OnceLock, RwLock};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::radial::{kappa_l, kappa_two_j, Orbital, RadialGrid};

// ---------------------------------------------------------------------------
// Spherical Bessel functions

/// Spherical Bessel function of the first kind.
pub fn bessel_j(l: u32, x: f64) -> f64 {
    if x < 0.5 * l as f64 {
        bessel_series(l, x)
    } else {
        bessel_j_all(l, x)[l as usize]
    }
}

/// `j_0(x) … j_{l_max}(x)`. Orders with `x < l/2` use the ascending series, orders
/// up to `x` the (stable) upward recurrence, and the rest a normalized downward
/// recurrence.
pub fn bessel_j_all(l_max: u32, x: f64) -> Vec<f64> {
    let n = l_max as usize + 1;
    let mut out = vec![0.0; n];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let (s, c) = x.sin_cos();
    let j0 = s / x;
    let j1 = s / (x * x) - c / x;
    let l_up = (x.floor() as usize).min(n - 1);
    out[0] = j0;
    if n > 1 {
        out[1] = j1;
    }
    for l in 1..l_up {
        out[l + 1] = (2 * l + 1) as f64 / x * out[l] - out[l - 1];
    }
    let first_down = l_up.max(1) + 1;
    if first_down < n {
        // Miller recurrence started well past the turning point, matched to the larger
        // of the two upward values bracketing the handover.
        let start = n + 40 + (20.0 * x.cbrt()) as usize;
        let mut down = vec![0.0; start + 2];
        down[start] = 1e-300;
        for l in (1..=start).rev() {
            down[l - 1] = (2 * l + 1) as f64 / x * down[l] - down[l + 1];
            if down[l - 1].abs() > 1e250 {
                for v in down.iter_mut().skip(l - 1) {
                    *v *= 1e-250;
                }
            }
        }
        let anchor = if l_up >= 1 && out[l_up - 1].abs() > out[l_up].abs() { l_up - 1 } else { l_up };
        let scale = out[anchor] / down[anchor];
        for l in first_down..n {
            out[l] = down[l] * scale;
        }
    }
    for (l, v) in out.iter_mut().enumerate() {
        if x < 0.5 * l as f64 {
            *v = bessel_series(l as u32, x);
        }
    }
    out
}

fn bessel_series(l: u32, x: f64) -> f64 {
    let mut lead = 1.0;
    for i in 1..=l {
        lead *= x / (2 * i + 1) as f64;
    }
    let y = -0.5 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= y / (k as f64 * (2 * l + 2 * k + 1) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    lead * sum
}

/// Legendre polynomial `P_l(x)`.
pub fn legendre_p(l: u32, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if l == 0 {
        return p0;
    }
    for n in 1..l {
        let n = n as f64;
        let p2 = ((2.0 * n + 1.0) * x * p1 - n * p0) / (n + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Deviation of `k Σ_{l≤l_max} (2l+1) j_l(kr₁) j_l(kr₂) P_l(cosθ)` from `sin(k r₁₂)/r₁₂`.
pub fn sph_wave_expansion_check(k: f64, r1: f64, r2: f64, cos_theta: f64, l_max: u32) -> f64 {
    let a = bessel_j_all(l_max, k * r1);
    let b = bessel_j_all(l_max, k * r2);
    let sum: f64 = (0..=l_max)
        .map(|l| (2 * l + 1) as f64 * a[l as usize] * b[l as usize] * legendre_p(l, cos_theta))
        .sum();
    let r12 = (r1 * r1 + r2 * r2 - 2.0 * r1 * r2 * cos_theta).max(0.0).sqrt();
    let exact = if k * r12 < 1e-8 { k } else { (k * r12).sin() / r12 };
    k * sum - exact
}

/// Residuals of `(d/dr − l/r) j_l(kr) = −k j_{l+1}(kr)` and
/// `(d/dr + (l+1)/r) j_l(kr) = k j_{l−1}(kr)`, derivative by central differences.
pub fn bessel_derivative_identity_check(l: u32, k: f64, r: f64) -> (f64, f64) {
    let step = 1e-5;
    let d = (bessel_j(l, k * (r + step)) - bessel_j(l, k * (r - step))) / (2.0 * step);
    let jl = bessel_j(l, k * r);
    let first = d - l as f64 / r * jl + k * bessel_j(l + 1, k * r);
    let below = if l == 0 {
        // j_{-1}(x) = cos x / x.
        let x = k * r;
        if x == 0.0 { 0.0 } else { x.cos() / x }
    } else {
        bessel_j(l - 1, k * r)
    };
    let second = d + (l + 1) as f64 / r * jl - k * below;
    (first, second)
}

// ---------------------------------------------------------------------------
// Wigner symbols (arguments doubled)

fn factorial(n: i64) -> BigInt {
    static TABLE: OnceLock<RwLock<Vec<BigInt>>> = OnceLock::new();
    let table = TABLE.get_or_init(|| RwLock::new(vec![BigInt::one()]));
    let n = n as usize;
    if let Some(v) = table.read().expect("factorial table poisoned").get(n) {
        return v.clone();
    }
    let mut t = table.write().expect("factorial table poisoned");
    while t.len() <= n {
        let next = t.last().expect("non-empty") * BigInt::from(t.len());
        t.push(next);
    }
    t[n].clone()
}

fn frac(num: BigInt, den: BigInt) -> BigRational {
    BigRational::new(num, den)
}

/// `(a+b-c)!(a-b+c)!(-a+b+c)!/(a+b+c+1)!` for doubled arguments.
fn delta_sq(a: i64, b: i64, c: i64) -> BigRational {
    frac(
        factorial((a + b - c) / 2) * factorial((a - b + c) / 2) * factorial((b + c - a) / 2),
        factorial((a + b + c) / 2 + 1),
    )
}

/// Triangle condition for doubled arguments, including integer perimeter.
pub fn triangle(a: u32, b: u32, c: u32) -> bool {
    let (a, b, c) = (a as i64, b as i64, c as i64);
    c <= a + b && c >= (a - b).abs() && (a + b + c) % 2 == 0
}

fn signed_sqrt(value: &BigRational, sq: &BigRational) -> f64 {
    // value · √sq, rounded once.
    let mag = (value * value * sq).to_f64().unwrap_or(0.0).sqrt();
    if value.is_negative() { -mag } else { mag }
}

type Key = [i32; 6];

fn cached(cache: &OnceLock<RwLock<HashMap<Key, f64>>>, key: Key, f: impl FnOnce() -> f64) -> f64 {
    let map = cache.get_or_init(|| RwLock::new(HashMap::new()));
    if let Some(&v) = map.read().expect("symbol cache poisoned").get(&key) {
        return v;
    }
    let v = f();
    map.write().expect("symbol cache poisoned").insert(key, v);
    v
}

/// Wigner 3j symbol `(j1 j2 j3; m1 m2 m3)` with all arguments doubled.
pub fn wigner_3j(tj1: u32, tj2: u32, tj3: u32, tm1: i32, tm2: i32, tm3: i32) -> f64 {
    static CACHE: OnceLock<RwLock<HashMap<Key, f64>>> = OnceLock::new();
    if tm1 + tm2 + tm3 != 0 || !triangle(tj1, tj2, tj3) {
        return 0.0;
    }
    for (j, m) in [(tj1, tm1), (tj2, tm2), (tj3, tm3)] {
        if m.unsigned_abs() > j || (j as i32 + m) % 2 != 0 {
            return 0.0;
        }
    }
    let key = [tj1 as i32, tj2 as i32, tj3 as i32, tm1, tm2, tm3];
    cached(&CACHE, key, || {
        let (j1, j2, j3) = (tj1 as i64, tj2 as i64, tj3 as i64);
        let (m1, m2, m3) = (tm1 as i64, tm2 as i64, tm3 as i64);
        let sq = delta_sq(j1, j2, j3)
            * BigRational::from_integer(
                factorial((j1 + m1) / 2)
                    * factorial((j1 - m1) / 2)
                    * factorial((j2 + m2) / 2)
                    * factorial((j2 - m2) / 2)
                    * factorial((j3 + m3) / 2)
                    * factorial((j3 - m3) / 2),
            );
        let t_min = 0.max((j2 - j3 - m1) / 2).max((j1 - j3 + m2) / 2);
        let t_max = ((j1 + j2 - j3) / 2).min((j1 - m1) / 2).min((j2 + m2) / 2);
        let mut sum = BigRational::zero();
        for t in t_min..=t_max {
            let den = factorial(t)
                * factorial((j3 - j2 + m1) / 2 + t)
                * factorial((j3 - j1 - m2) / 2 + t)
                * factorial((j1 + j2 - j3) / 2 - t)
                * factorial((j1 - m1) / 2 - t)
                * factorial((j2 + m2) / 2 - t);
            let term = frac(BigInt::one(), den);
            if t % 2 == 0 { sum += term } else { sum -= term }
        }
        let phase = if ((j1 - j2 - m3) / 2).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        phase * signed_sqrt(&sum, &sq)
    })
}

/// Wigner 6j symbol `{j1 j2 j3; j4 j5 j6}` with doubled arguments.
pub fn wigner_6j(a: u32, b: u32, c: u32, d: u32, e: u32, f: u32) -> f64 {
    static CACHE: OnceLock<RwLock<HashMap<Key, f64>>> = OnceLock::new();
    if !(triangle(a, b, c) && triangle(a, e, f) && triangle(d, b, f) && triangle(d, e, c)) {
        return 0.0;
    }
    let key = [a, b, c, d, e, f].map(|v| v as i32);
    cached(&CACHE, key, || {
        let [a, b, c, d, e, f] = [a, b, c, d, e, f].map(|v| v as i64);
        let sq = delta_sq(a, b, c) * delta_sq(a, e, f) * delta_sq(d, b, f) * delta_sq(d, e, c);
        let lows = [(a + b + c) / 2, (a + e + f) / 2, (d + b + f) / 2, (d + e + c) / 2];
        let highs = [(a + b + d + e) / 2, (a + c + d + f) / 2, (b + c + e + f) / 2];
        let t_min = *lows.iter().max().expect("four entries");
        let t_max = *highs.iter().min().expect("three entries");
        let mut sum = BigRational::zero();
        for t in t_min..=t_max {
            let mut den = BigInt::one();
            for lo in lows {
                den *= factorial(t - lo);
            }
            for hi in highs {
                den *= factorial(hi - t);
            }
            let term = frac(factorial(t + 1), den);
            if t % 2 == 0 { sum += term } else { sum -= term }
        }
        signed_sqrt(&sum, &sq)
    })
}

/// Wigner 9j symbol with doubled arguments, rows `(a b c) (d e f) (g h i)`.
#[allow(clippy::too_many_arguments)]
pub fn wigner_9j(a: u32, b: u32, c: u32, d: u32, e: u32, f: u32, g: u32, h: u32, i: u32) -> f64 {
    let lo = [a.abs_diff(i), d.abs_diff(h), b.abs_diff(f)].into_iter().max().expect("three");
    let hi = [a + i, d + h, b + f].into_iter().min().expect("three");
    let mut sum = 0.0;
    let mut x = lo;
    while x <= hi {
        let phase = if x % 2 == 0 { 1.0 } else { -1.0 };
        sum += phase
            * (x + 1) as f64
            * wigner_6j(a, b, c, f, i, x)
            * wigner_6j(d, e, f, b, x, h)
            * wigner_6j(g, h, i, x, a, d);
        x += 2;
    }
    sum
}

/// Clebsch–Gordan coefficient `⟨j1 m1 j2 m2 | J M⟩`, doubled arguments.
pub fn clebsch_gordan(tj1: u32, tm1: i32, tj2: u32, tm2: i32, tj: u32, tm: i32) -> f64 {
    let phase_exp = (tj1 as i32 - tj2 as i32 + tm) / 2;
    let phase = if phase_exp.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    phase * ((tj + 1) as f64).sqrt() * wigner_3j(tj1, tj2, tj, tm1, tm2, -tm)
}

pub(crate) fn parity_sign(exp: i64) -> f64 {
    if exp.rem_euclid(2) == 0 { 1.0 } else { -1.0 }
}

// ---------------------------------------------------------------------------
// Reduced matrix elements of spherical tensors

/// `⟨l||C^L||l'⟩`.
pub fn reduced_c_orbital(l1: u32, big_l: u32, l2: u32) -> f64 {
    parity_sign(l1 as i64)
        * (((2 * l1 + 1) * (2 * l2 + 1)) as f64).sqrt()
        * wigner_3j(2 * l1, 2 * big_l, 2 * l2, 0, 0, 0)
}

/// `⟨κ||C^L||κ'⟩` between spin-angular functions; equal for `(-κ, -κ')`.
pub fn reduced_c(kappa1: i32, big_l: u32, kappa2: i32) -> f64 {
    let (l1, l2) = (kappa_l(kappa1), kappa_l(kappa2));
    let (tj1, tj2) = (kappa_two_j(kappa1), kappa_two_j(kappa2));
    if (l1 + big_l + l2) % 2 != 0 || !triangle(tj1, 2 * big_l, tj2) {
        return 0.0;
    }
    let exp = (2 * l1 as i64 + 1 + tj2 as i64 + 2 * big_l as i64) / 2;
    parity_sign(exp)
        * (((tj1 + 1) * (tj2 + 1)) as f64).sqrt()
        * wigner_6j(2 * l1, tj1, 1, tj2, 2 * l2, 2 * big_l)
        * reduced_c_orbital(l1, big_l, l2)
}

/// `⟨κ||{C^L σ}^K||κ'⟩` between two-component spin-angular functions.
pub fn spin_angular(kappa1: i32, big_l: u32, rank: u32, kappa2: i32) -> f64 {
    let (l1, l2) = (kappa_l(kappa1), kappa_l(kappa2));
    let (tj1, tj2) = (kappa_two_j(kappa1), kappa_two_j(kappa2));
    if (l1 + big_l + l2) % 2 != 0 || !triangle(tj1, 2 * rank, tj2) {
        return 0.0;
    }
    (((tj1 + 1) * (tj2 + 1) * (2 * rank + 1)) as f64).sqrt()
        * wigner_9j(2 * l1, 2 * l2, 2 * big_l, 1, 1, 2, tj1, tj2, 2 * rank)
        * reduced_c_orbital(l1, big_l, l2)
        * 6f64.sqrt()
}

/// Angular factors `(A, B)` of `⟨a||g(r){C^L α}^K||b⟩ = i ∫ g (A P_a Q_b − B Q_a P_b) dr`.
pub fn alpha_angular(kappa_a: i32, big_l: u32, rank: u32, kappa_b: i32) -> (f64, f64) {
    (spin_angular(kappa_a, big_l, rank, -kappa_b), spin_angular(-kappa_a, big_l, rank, kappa_b))
}

/// Fine-mesh radial density of an `α`-type operator with angular factors `(A, B)`.
pub fn alpha_density(a: &Orbital, b: &Orbital, angular: (f64, f64)) -> Vec<f64> {
    let (pa_qb, qa_pb) = (a.mixed(b), b.mixed(a));
    pa_qb.iter().zip(&qa_pb).map(|(x, y)| angular.0 * x - angular.1 * y).collect()
}

// ---------------------------------------------------------------------------
// Photon potentials

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InteractionKind {
    Gaunt,
    ScalarRetardation,
    Coulomb,
}

impl InteractionKind {
    pub fn name(self) -> &'static str {
        match self {
            InteractionKind::Gaunt => "gaunt",
            InteractionKind::ScalarRetardation => "scalar-retardation",
            InteractionKind::Coulomb => "coulomb",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Multipole {
    pub l: u32,
    /// Photon momentum, inverse Bohr; ignored for Coulomb.
    pub k: f64,
    pub kind: InteractionKind,
}

impl Multipole {
    pub fn new(l: u32, k: f64, kind: InteractionKind) -> crate::Result<Self> {
        if kind != InteractionKind::Coulomb && !(k > 0.0) {
            return Err(crate::Error::InvalidModel(format!("retarded multipole needs k > 0, got {k}")));
        }
        Ok(Multipole { l, k, kind })
    }
}

/// One radial integral with its angular factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RmeTerm {
    pub radial: f64,
    pub angular: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReducedMatrixElement {
    /// `(κ, spectral index)` of bra and ket.
    pub bra: (i32, usize),
    pub ket: (i32, usize),
    pub multipole: Multipole,
    /// Tensor rank of the operator.
    pub rank: u32,
    pub terms: Vec<RmeTerm>,
    /// Set when a selection rule forces an exact zero.
    pub zero_reason: Option<&'static str>,
}

impl ReducedMatrixElement {
    /// Full reduced element (coefficient of `i` for the `α`-type potentials).
    pub fn value(&self) -> f64 {
        self.terms.iter().map(|t| t.radial * t.angular).sum()
    }

    fn zero(bra: &Orbital, ket: &Orbital, multipole: Multipole, rank: u32, why: &'static str) -> Self {
        ReducedMatrixElement {
            bra: (bra.kappa, bra.index),
            ket: (ket.kappa, ket.index),
            multipole,
            rank,
            terms: Vec::new(),
            zero_reason: Some(why),
        }
    }
}

/// Selection rules for a rank-`rank` operator of parity `(-1)^{big_l + 1}` (α-type).
fn alpha_selection(a: &Orbital, b: &Orbital, big_l: u32, rank: u32) -> Option<&'static str> {
    if !triangle(a.two_j(), 2 * rank, b.two_j()) {
        Some("triangle (j_a, K, j_b) violated")
    } else if (a.l() + b.l() + big_l + 1) % 2 != 0 {
        Some("parity")
    } else {
        None
    }
}

/// `radial` holds quadrature weights on the fine mesh, as from [`bessel_weights`].
fn alpha_terms(a: &Orbital, b: &Orbital, big_l: u32, rank: u32, radial: &[f64]) -> Vec<RmeTerm> {
    let (pa_qb, qa_pb) = (a.mixed(b), b.mixed(a));
    let r1: f64 = (0..radial.len()).map(|m| radial[m] * pa_qb[m]).sum();
    let r2: f64 = (0..radial.len()).map(|m| radial[m] * qa_pb[m]).sum();
    let (ang1, ang2) = alpha_angular(a.kappa, big_l, rank, b.kappa);
    vec![RmeTerm { radial: r1, angular: ang1 }, RmeTerm { radial: r2, angular: -ang2 }]
}

/// Phase advance per step (radians) above which Bessel factors are faded out, and
/// where they vanish.
const BESSEL_FADE: (f64, f64) = (24.0, 48.0);

fn fade(phase: f64) -> f64 {
    let (a, b) = BESSEL_FADE;
    let bump = |t: f64| if t <= 0.0 { 0.0 } else { (-1.0 / t).exp() };
    if phase <= a {
        1.0
    } else if phase >= b {
        0.0
    } else {
        let (u, v) = (bump(b - phase), bump(phase - a));
        u / (u + v)
    }
}

/// Fine-mesh weights `W_l[m]`, `l ≤ l_max`, with `Σ_m W_l[m] f_m ≈ ∫ j_l(kr) f(r) dr`
/// for samples `f_m` native to either sublattice (full weight on each, like
/// `grid.fine.w`).
///
/// On each sublattice `f r` is interpolated by eight-point Lagrange polynomials in
/// `x = ln r` and integrated against `j_l(k e^x)` with a Gauss–Legendre order that
/// follows the oscillation. Steps where `k r h` exceeds the fade window are
/// dropped smoothly: the interpolant has no content there and plain sampling would
/// alias.
pub fn bessel_weights(grid: &RadialGrid, k: f64, l_max: u32) -> Vec<Vec<f64>> {
    let fine = &grid.fine;
    let nf = fine.len();
    let h = grid.h;
    let nl = l_max as usize + 1;
    let mut out = vec![vec![0.0; nf]; nl];
    for first in [1usize, 0] {
        let idx: Vec<usize> = (first..nf).step_by(2).collect();
        let m = idx.len();
        if m < 8 {
            for &i in &idx {
                let j = bessel_j_all(l_max, k * fine.r[i]);
                for l in 0..nl {
                    out[l][i] = fine.w[i] * j[l];
                }
            }
            continue;
        }
        let r0 = fine.r[idx[0]];
        for j in 0..m - 1 {
            let phase_lo = k * fine.r[idx[j]] * h;
            if phase_lo >= BESSEL_FADE.1 {
                break;
            }
            let phase_hi = (k * fine.r[idx[j + 1]] * h).min(BESSEL_FADE.1);
            let nq = 10 + (0.6 * phase_hi).ceil() as usize;
            let start = j.saturating_sub(3).min(m - 8);
            let (us, ws) = crate::quad::gauss_legendre(nq, j as f64, j as f64 + 1.0);
            for (&u, &wq) in us.iter().zip(&ws) {
                let r = r0 * (h * u).exp();
                let fw = fade(k * r * h);
                if fw == 0.0 {
                    continue;
                }
                let jl = bessel_j_all(l_max, k * r);
                for i in 0..8 {
                    let node = (start + i) as f64;
                    let basis: f64 = (0..8)
                        .filter(|&q| q != i)
                        .map(|q| (u - (start + q) as f64) / (node - (start + q) as f64))
                        .product();
                    let f = wq * h * fine.r[idx[start + i]] * basis * fw;
                    for l in 0..nl {
                        out[l][idx[start + i]] += f * jl[l];
                    }
                }
            }
        }
    }
    out
}

/// `⟨a||j_l(kr){C^l α}^K||b⟩` for each rank `K ∈ {l−1, l, l+1}` of the recoupled
/// Gaunt potential `α j_l(kr) C^l`.
pub fn gaunt_potential_rme(bra: &Orbital, ket: &Orbital, l: u32, k: f64, grid: &RadialGrid) -> Vec<ReducedMatrixElement> {
    let multipole = Multipole { l, k, kind: InteractionKind::Gaunt };
    let jl = bessel_weights(grid, k, l).swap_remove(l as usize);
    (l.saturating_sub(1)..=l + 1)
        .filter(|&rank| triangle(2 * l, 2, 2 * rank))
        .map(|rank| match alpha_selection(bra, ket, l, rank) {
            Some(why) => ReducedMatrixElement::zero(bra, ket, multipole, rank, why),
            None => ReducedMatrixElement {
                bra: (bra.kappa, bra.index),
                ket: (ket.kappa, ket.index),
                multipole,
                rank,
                terms: alpha_terms(bra, ket, l, rank, &jl),
                zero_reason: None,
            },
        })
        .collect()
}

/// Coefficients `√((l+1)(2l+3))` and `√(l(2l-1))` of the `L = l±1` parts of `V_SR^l`.
pub fn sr_coefficients(l: u32) -> [(u32, f64); 2] {
    let lf = l as f64;
    [(l + 1, ((lf + 1.0) * (2.0 * lf + 3.0)).sqrt()), (l.saturating_sub(1), (lf * (2.0 * lf - 1.0)).sqrt())]
}

/// `⟨a||V_SR^l||b⟩` with
/// `V_SR^l = √((l+1)(2l+3)) j_{l+1}(kr){C^{l+1}α}^l + √(l(2l−1)) j_{l−1}(kr){C^{l−1}α}^l`.
pub fn scalar_retardation_rme(bra: &Orbital, ket: &Orbital, l: u32, k: f64, grid: &RadialGrid) -> ReducedMatrixElement {
    let multipole = Multipole { l, k, kind: InteractionKind::ScalarRetardation };
    // Both parts share the parity (-1)^l.
    if let Some(why) = alpha_selection(bra, ket, l + 1, l) {
        return ReducedMatrixElement::zero(bra, ket, multipole, l, why);
    }
    let mut terms = Vec::new();
    for (big_l, coef) in sr_coefficients(l) {
        if coef == 0.0 {
            continue;
        }
        let jl = bessel_weights(grid, k, big_l).swap_remove(big_l as usize);
        for t in alpha_terms(bra, ket, big_l, l, &jl) {
            terms.push(RmeTerm { radial: t.radial, angular: coef * t.angular });
        }
    }
    ReducedMatrixElement {
        bra: (bra.kappa, bra.index),
        ket: (ket.kappa, ket.index),
        multipole,
        rank: l,
        terms,
        zero_reason: None,
    }
}

/// `⟨a||C^L||c⟩⟨b||C^L||d⟩ R^L(ac; bd)`: electron 1 goes `c → a`, electron 2 `d → b`.
pub fn coulomb_multipole_rme(a: &Orbital, c: &Orbital, b: &Orbital, d: &Orbital, big_l: u32, grid: &RadialGrid) -> f64 {
    let angular = reduced_c(a.kappa, big_l, c.kappa) * reduced_c(b.kappa, big_l, d.kappa);
    if angular == 0.0 {
        return 0.0;
    }
    let kernel = crate::radial::slater_kernel(grid, big_l);
    let rho1 = nalgebra::DVector::from_vec(a.density(c));
    let rho2 = nalgebra::DVector::from_vec(b.density(d));
    angular * (rho1.transpose() * kernel * rho2)[(0, 0)]
}

/// `⟨a||j_l(kr) C^l||b⟩`, the retarded charge multipole of the Feynman-gauge form.
pub fn charge_potential_rme(bra: &Orbital, ket: &Orbital, l: u32, k: f64, grid: &RadialGrid) -> f64 {
    let angular = reduced_c(bra.kappa, l, ket.kappa);
    if angular == 0.0 {
        return 0.0;
    }
    let jl = bessel_weights(grid, k, l).swap_remove(l as usize);
    let rho = bra.density(ket);
    angular * (0..rho.len()).map(|m| jl[m] * rho[m]).sum::<f64>()
}

/// Phase of `(α₁·α₂)(C₁^l·C₂^l) = Σ_K (-1)^{1+l-K} {C^l α}^K(1)·{C^l α}^K(2)`.
pub fn gaunt_rank_phase(l: u32, rank: u32) -> f64 {
    parity_sign((1 + l as i64) - rank as i64)
}

/// Phase `(-1)^{j_b + j_c + J} {j_a j_b J; j_d j_c K}` of a rank-`K` scalar product
/// between the coupled states `|(ab)J⟩` and `|(cd)J⟩`.
pub fn two_electron_factor(tja: u32, tjb: u32, tjc: u32, tjd: u32, two_big_j: u32, rank: u32) -> f64 {
    parity_sign(((tjb + tjc + two_big_j) / 2) as i64) * wigner_6j(tja, tjb, two_big_j, tjd, tjc, 2 * rank)
}

// ---------------------------------------------------------------------------
// Separated Coulomb-gauge interaction

/// One multipole term of the separated interaction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FTerm {
    pub l: u32,
    pub kind: InteractionKind,
    /// Weight in units of `e²k/4π²`: `−(2l+1)` for Gaunt, `1/(2l+1)` for scalar retardation.
    pub weight: f64,
}

/// Multipole list of `f_C(k) = e²k/4π² Σ_l [−(2l+1) V_G·V_G + V_SR·V_SR/(2l+1)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparatedInteraction {
    pub terms: Vec<FTerm>,
}

pub fn coulomb_gauge_f_assemble(l_max: u32) -> SeparatedInteraction {
    let mut terms = Vec::new();
    for l in 0..=l_max {
        let lf = (2 * l + 1) as f64;
        terms.push(FTerm { l, kind: InteractionKind::Gaunt, weight: -lf });
        terms.push(FTerm { l, kind: InteractionKind::ScalarRetardation, weight: 1.0 / lf });
    }
    SeparatedInteraction { terms }
}

impl SeparatedInteraction {
    /// `e²k/4π²` in atomic units for photon momentum `k` (photon energy `ck`).
    ///
    /// The unretarded limit of the Feynman-gauge form `−e²/4π² (1 − α₁·α₂) sin(kr₁₂)/r₁₂`
    /// must give `(1 − α₁·α₂)/r₁₂`; with energy denominators `1/(E − ε − ck)` this
    /// fixes the factor to `−ck/π`. The same factor multiplies the separated
    /// Coulomb-gauge terms so that their Gaunt part coincides with the Feynman one.
    pub fn unit_factor(k: f64, c: f64) -> f64 {
        -c * k / PI
    }

    /// Coefficient multiplying `V^l(1)·V^l(2)` for one term.
    pub fn coefficient(term: &FTerm, k: f64, c: f64) -> f64 {
        term.weight * Self::unit_factor(k, c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::C_AU;
    use crate::radial::{dirac_spectrum, make_grid};
    use nalgebra::Complex;
    use proptest::prelude::*;

    type C64 = Complex<f64>;

    #[test]
    fn bessel_examples() {
        assert_eq!(bessel_j(0, 0.0), 1.0);
        assert!((bessel_j(0, 1.0) - 1f64.sin()).abs() < 1e-15);
        let a = bessel_series(5, 0.1);
        let b = bessel_j_all(5, 0.1)[5];
        assert!(((a - b) / a).abs() < 1e-12);
        // Downward recursion in the window l/2 ≤ x < l against the series.
        for (l, x) in [(8u32, 5.0f64), (20, 12.0), (40, 25.0)] {
            let series = bessel_series(l, x);
            let all = bessel_j_all(l + 3, x)[l as usize];
            assert!(((series - all) / series).abs() < 1e-12, "{l} {x}: {series} {all}");
        }
    }

    #[test]
    fn bessel_large_argument() {
        // j_l(x) → sin(x − lπ/2)/x with a known 1/x² correction for l = 1.
        let x = 1234.5f64;
        let exact = x.sin() / (x * x) - x.cos() / x;
        assert!((bessel_j(1, x) - exact).abs() < 1e-13);
        let all = bessel_j_all(60, x);
        // Wronskian-type cross-product identity j_l j_{l+1} consistency via recurrence.
        for l in 1..59 {
            let lhs = all[l + 1] + all[l - 1];
            let rhs = (2 * l + 1) as f64 / x * all[l];
            assert!((lhs - rhs).abs() < 1e-14);
        }
    }

    #[test]
    fn spherical_wave_expansion() {
        assert!(sph_wave_expansion_check(1.0, 1.0, 0.5, 1.0, 40).abs() < 1e-10);
        let k = 1e-6;
        assert!((sph_wave_expansion_check(k, 1.0, 0.5, 0.3, 10) / k).abs() < 1e-8);
        assert!(sph_wave_expansion_check(2.0, 1.3, 0.0, -0.4, 0).abs() < 1e-14);
        let mut last = f64::INFINITY;
        for l_max in [4, 8, 12, 16, 20] {
            let res = sph_wave_expansion_check(1.5, 1.0, 0.9, 0.2, l_max).abs();
            assert!(res <= last);
            last = res;
        }
    }

    #[test]
    fn bessel_derivatives() {
        let (a, _) = bessel_derivative_identity_check(0, 1.3, 0.7);
        assert!(a.abs() < 1e-8);
        let (_, b) = bessel_derivative_identity_check(1, 1.0, 2.0);
        assert!(b.abs() < 1e-8);
        let (a, b) = bessel_derivative_identity_check(2, 0.0, 1.0);
        assert_eq!((a, b), (0.0, 0.0));
    }

    #[test]
    fn wigner_known_values() {
        // (1 1 0; 0 0 0) = -1/√3, {1 1 1; 1 1 1} = 1/6, {½ ½ 0; ½ ½ 0} = -1/2.
        assert!((wigner_3j(2, 2, 0, 0, 0, 0) + 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((wigner_6j(2, 2, 2, 2, 2, 2) - 1.0 / 6.0).abs() < 1e-15);
        assert!((wigner_6j(1, 1, 0, 1, 1, 0) + 0.5).abs() < 1e-15);
        // {1 1 1; 1 1 1; 1 1 1}... vanishes by symmetry (odd sum of an all-equal 9j).
        assert!(wigner_9j(2, 2, 2, 2, 2, 2, 2, 2, 2).abs() < 1e-15);
        assert_eq!(wigner_3j(2, 2, 6, 0, 0, 0), 0.0);
        // 9j with a zero reduces to a 6j.
        let nine = wigner_9j(2, 4, 6, 1, 3, 4, 3, 7, 0);
        assert_eq!(nine, 0.0);
        let nine = wigner_9j(2, 4, 4, 1, 3, 4, 3, 3, 0);
        let six = wigner_6j(2, 4, 4, 3, 3, 1);
        let phase = parity_sign(((4 + 1 + 4 + 3) / 2) as i64);
        assert!((nine - phase * six / (5.0 * 4.0f64).sqrt()).abs() < 1e-14, "{nine} {six}");
    }

    #[test]
    fn reduced_c_matches_closed_form() {
        // ⟨κ||C^L||κ'⟩ = (-1)^{j+1/2} √((2j+1)(2j'+1)) (j L j'; 1/2 0 -1/2) Π(l L l').
        for &k1 in &[-1, 1, -2, 2, -3, 3] {
            for &k2 in &[-1, 1, -2, 2, -3] {
                for big_l in 0..5 {
                    let (tj1, tj2) = (kappa_two_j(k1), kappa_two_j(k2));
                    let parity_ok = (kappa_l(k1) + big_l + kappa_l(k2)) % 2 == 0;
                    let closed = if parity_ok {
                        parity_sign(((tj1 + 1) / 2) as i64)
                            * (((tj1 + 1) * (tj2 + 1)) as f64).sqrt()
                            * wigner_3j(tj1, 2 * big_l, tj2, 1, 0, -1)
                    } else {
                        0.0
                    };
                    assert!((reduced_c(k1, big_l, k2) - closed).abs() < 1e-14, "{k1} {big_l} {k2}: {} vs {closed}", reduced_c(k1, big_l, k2));
                    assert!((reduced_c(-k1, big_l, -k2) - closed).abs() < 1e-14);
                }
            }
        }
    }

    // -- brute-force angular machinery --------------------------------------

    fn fact(n: i32) -> f64 {
        (1..=n).map(|i| i as f64).product()
    }

    /// `Y_lm(θ, φ)` with Condon–Shortley phase.
    fn ylm(l: i32, m: i32, theta: f64, phi: f64) -> C64 {
        let am = m.abs();
        let x = theta.cos();
        // Associated Legendre P_l^|m| including (-1)^m.
        let mut pmm = 1.0;
        let s = (1.0 - x * x).max(0.0).sqrt();
        for i in 1..=am {
            pmm *= -((2 * i - 1) as f64) * s;
        }
        let plm = if l == am {
            pmm
        } else {
            let mut p0 = pmm;
            let mut p1 = x * (2 * am + 1) as f64 * pmm;
            for ll in am + 2..=l {
                let p2 = ((2 * ll - 1) as f64 * x * p1 - (ll + am - 1) as f64 * p0) / (ll - am) as f64;
                p0 = p1;
                p1 = p2;
            }
            p1
        };
        let norm = ((2 * l + 1) as f64 / (4.0 * PI) * fact(l - am) / fact(l + am)).sqrt();
        let y = C64::from_polar(norm * plm, am as f64 * phi);
        if m >= 0 { y } else { y.conj() * parity_sign(am as i64) }
    }

    fn c_lm(l: i32, m: i32, theta: f64, phi: f64) -> C64 {
        ylm(l, m, theta, phi) * (4.0 * PI / (2 * l + 1) as f64).sqrt()
    }

    /// Two-component `Ω_κm`, `tm` doubled.
    fn omega(kappa: i32, tm: i32, theta: f64, phi: f64) -> [C64; 2] {
        let l = kappa_l(kappa) as i32;
        let tj = kappa_two_j(kappa);
        let mut out = [C64::new(0.0, 0.0); 2];
        for (slot, ts) in [(0usize, 1i32), (1, -1)] {
            let tml = tm - ts;
            if tml.abs() > 2 * l {
                continue;
            }
            let cg = clebsch_gordan(2 * l as u32, tml, 1, ts, tj, tm);
            out[slot] = ylm(l, tml / 2, theta, phi) * cg;
        }
        out
    }

    /// Spherical components of the Pauli matrices, index `q + 1`.
    fn sigma_spherical() -> [[[C64; 2]; 2]; 3] {
        let z = C64::new(0.0, 0.0);
        let o = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        let sx = [[z, o], [o, z]];
        let sy = [[z, -i], [i, z]];
        let sz = [[o, z], [z, -o]];
        let r2 = 2f64.sqrt();
        let mut out = [[[z; 2]; 2]; 3];
        for a in 0..2 {
            for b in 0..2 {
                out[2][a][b] = -(sx[a][b] + i * sy[a][b]) / r2;
                out[1][a][b] = sz[a][b];
                out[0][a][b] = (sx[a][b] - i * sy[a][b]) / r2;
            }
        }
        out
    }

    /// `(x_g, w_g)` for θ by Gauss–Legendre in cos θ and φ uniform.
    fn sphere_rule(n: usize) -> Vec<(f64, f64, f64)> {
        let (x, w) = crate::quad::gauss_legendre(n, -1.0, 1.0);
        let nphi = 2 * n + 2;
        let mut out = Vec::new();
        for (xi, wi) in x.iter().zip(&w) {
            for p in 0..nphi {
                let phi = 2.0 * PI * p as f64 / nphi as f64;
                out.push((xi.acos(), phi, wi * 2.0 * PI / nphi as f64));
            }
        }
        out
    }

    #[test]
    fn spin_angular_against_m_sums() {
        let rule = sphere_rule(14);
        let sig = sigma_spherical();
        let cases = [(-1, 1, 1, 2), (-1, 0, 1, -1), (1, 1, 1, -1), (-2, 1, 0, 1), (2, 2, 1, -1), (-3, 2, 2, 1), (3, 1, 1, -2), (-2, 3, 2, 2)];
        for (ka, big_l, rank, kb) in cases {
            let (tja, tjb) = (kappa_two_j(ka) as i32, kappa_two_j(kb) as i32);
            let reduced = spin_angular(ka, big_l, rank, kb);
            for tma in (-tja..=tja).step_by(2) {
                for tmb in (-tjb..=tjb).step_by(2) {
                    let tq = tma - tmb;
                    if tq.abs() > 2 * rank as i32 {
                        continue;
                    }
                    let mut direct = C64::new(0.0, 0.0);
                    for &(th, ph, w) in &rule {
                        let oa = omega(ka, tma, th, ph);
                        let ob = omega(kb, tmb, th, ph);
                        for nu in -(big_l as i32)..=big_l as i32 {
                            let mu = tq / 2 - nu;
                            if mu.abs() > 1 {
                                continue;
                            }
                            let cg = clebsch_gordan(2 * big_l, 2 * nu, 2, 2 * mu, 2 * rank, tq);
                            if cg == 0.0 {
                                continue;
                            }
                            let cl = c_lm(big_l as i32, nu, th, ph);
                            let s = &sig[(mu + 1) as usize];
                            for a in 0..2 {
                                for b in 0..2 {
                                    direct += oa[a].conj() * s[a][b] * ob[b] * cl * cg * w;
                                }
                            }
                        }
                    }
                    let we = parity_sign(((tja - tma) / 2) as i64)
                        * wigner_3j(tja as u32, 2 * rank, tjb as u32, -tma, tq, tmb)
                        * reduced;
                    assert!((direct.re - we).abs() < 1e-12 && direct.im.abs() < 1e-12, "{ka} {big_l} {rank} {kb}: {direct} vs {we}");
                }
            }
        }
    }

    #[test]
    fn coulomb_reduced_against_m_sums() {
        let rule = sphere_rule(12);
        for (ka, big_l, kb) in [(-1, 0, -1), (-1, 1, 1), (-2, 1, -1), (2, 2, -2), (-3, 2, 1)] {
            let (tja, tjb) = (kappa_two_j(ka) as i32, kappa_two_j(kb) as i32);
            let reduced = reduced_c(ka, big_l, kb);
            let tma = 1;
            for tmb in (-tjb..=tjb).step_by(2) {
                let tq = tma - tmb;
                if tq.abs() > 2 * big_l as i32 {
                    continue;
                }
                let mut direct = C64::new(0.0, 0.0);
                for &(th, ph, w) in &rule {
                    let oa = omega(ka, tma, th, ph);
                    let ob = omega(kb, tmb, th, ph);
                    let cl = c_lm(big_l as i32, tq / 2, th, ph);
                    direct += (oa[0].conj() * ob[0] + oa[1].conj() * ob[1]) * cl * w;
                }
                let we = parity_sign(((tja - tma) / 2) as i64) * wigner_3j(tja as u32, 2 * big_l, tjb as u32, -tma, tq, tmb) * reduced;
                assert!((direct.re - we).abs() < 1e-12, "{ka} {big_l} {kb}: {direct} vs {we}");
            }
        }
    }

    fn test_grid() -> RadialGrid {
        make_grid(200, 1e-6, 6.0).unwrap()
    }

    fn orbitals(kappa: i32) -> Vec<Orbital> {
        dirac_spectrum(10.0, kappa, &test_grid(), C_AU).unwrap().into_iter().filter(|o| o.positive).collect()
    }

    /// Dirac spinor at a point of the fine mesh radius `r` (index `m`), `tm` doubled.
    fn spinor(o: &Orbital, m: usize, r: f64, tm: i32, th: f64, ph: f64) -> [C64; 4] {
        let up = omega(o.kappa, tm, th, ph);
        let dn = omega(-o.kappa, tm, th, ph);
        let i = C64::new(0.0, 1.0);
        [up[0] * o.f_fine[m] / r, up[1] * o.f_fine[m] / r, i * dn[0] * o.g_fine[m] / r, i * dn[1] * o.g_fine[m] / r]
    }

    fn alpha_cartesian() -> [[[C64; 4]; 4]; 3] {
        let z = C64::new(0.0, 0.0);
        let o = C64::new(1.0, 0.0);
        let i = C64::new(0.0, 1.0);
        let pauli = [[[z, o], [o, z]], [[z, -i], [i, z]], [[o, z], [z, -o]]];
        let mut out = [[[z; 4]; 4]; 3];
        for c in 0..3 {
            for a in 0..2 {
                for b in 0..2 {
                    out[c][a][b + 2] = pauli[c][a][b];
                    out[c][a + 2][b] = pauli[c][a][b];
                }
            }
        }
        out
    }

    /// `∫ ψ_a† O ψ_b d³r` where `O(r, θ, φ)` is a 4×4 matrix field; the radial sum runs
    /// over the fine mesh with half weight per sublattice for α-type integrands.
    fn brute_force(a: &Orbital, tma: i32, b: &Orbital, tmb: i32, grid: &RadialGrid, op: impl Fn(f64, f64, f64) -> [[C64; 4]; 4]) -> C64 {
        let rule = sphere_rule(10);
        let mut total = C64::new(0.0, 0.0);
        for m in 0..grid.fine.len() {
            let r = grid.fine.r[m];
            let mut ang = C64::new(0.0, 0.0);
            for &(th, ph, w) in &rule {
                let pa = spinor(a, m, r, tma, th, ph);
                let pb = spinor(b, m, r, tmb, th, ph);
                let o = op(r, th, ph);
                for x in 0..4 {
                    for y in 0..4 {
                        ang += pa[x].conj() * o[x][y] * pb[y] * w;
                    }
                }
            }
            total += ang * r * r * grid.fine.w[m] * 0.5;
        }
        total
    }

    #[test]
    fn gaunt_rme_against_brute_force() {
        let grid = test_grid();
        let s1 = orbitals(-1);
        let p1 = orbitals(1);
        let (a, b) = (&s1[0], &p1[0]);
        let k = 1.0;
        let alpha = alpha_cartesian();
        let r2 = 2f64.sqrt();
        let i = C64::new(0.0, 1.0);
        for l in [0u32, 1] {
            for rme in gaunt_potential_rme(a, b, l, k, &grid) {
                let rank = rme.rank;
                let (tma, tmb) = (1, -1);
                let tq = tma - tmb;
                if tq.abs() > 2 * rank as i32 {
                    continue;
                }
                let direct = brute_force(a, tma, b, tmb, &grid, |r, th, ph| {
                    let mut o = [[C64::new(0.0, 0.0); 4]; 4];
                    let jl = bessel_j(l, k * r);
                    for nu in -(l as i32)..=l as i32 {
                        let mu = tq / 2 - nu;
                        if mu.abs() > 1 {
                            continue;
                        }
                        let cg = clebsch_gordan(2 * l, 2 * nu, 2, 2 * mu, 2 * rank, tq);
                        let cl = c_lm(l as i32, nu, th, ph) * cg * jl;
                        for x in 0..4 {
                            for y in 0..4 {
                                let comp = match mu {
                                    1 => -(alpha[0][x][y] + i * alpha[1][x][y]) / r2,
                                    0 => alpha[2][x][y],
                                    _ => (alpha[0][x][y] - i * alpha[1][x][y]) / r2,
                                };
                                o[x][y] += comp * cl;
                            }
                        }
                    }
                    o
                });
                let we = parity_sign(((a.two_j() as i32 - tma) / 2) as i64)
                    * wigner_3j(a.two_j(), 2 * rank, b.two_j(), -tma, tq, tmb)
                    * rme.value();
                assert!(direct.re.abs() < 1e-12, "{direct}");
                assert!((direct.im - we).abs() < 1e-8 * we.abs().max(1e-3), "l={l} K={rank}: {direct} vs i·{we}");
            }
        }
        // Parity-forbidden: s → s with l = 0.
        let forbidden = gaunt_potential_rme(&s1[0], &s1[1], 0, k, &grid);
        assert!(forbidden.iter().all(|r| r.value() == 0.0 && r.zero_reason.is_some()));
    }

    /// `∇[j_l(kr) C^l_m]` by central differences in Cartesian coordinates.
    fn grad_jc(l: u32, mm: i32, k: f64, x: [f64; 3]) -> [C64; 3] {
        let f = |p: [f64; 3]| {
            let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            let th = (p[2] / r).acos();
            let ph = p[1].atan2(p[0]);
            c_lm(l as i32, mm, th, ph) * bessel_j(l, k * r)
        };
        let h = 1e-5 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let mut g = [C64::new(0.0, 0.0); 3];
        for d in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[d] += h;
            xm[d] -= h;
            let mut xpp = x;
            let mut xmm = x;
            xpp[d] += 2.0 * h;
            xmm[d] -= 2.0 * h;
            g[d] = (f(xmm) - f(xpp) + (f(xp) - f(xm)) * 8.0) / (12.0 * h);
        }
        g
    }

    #[test]
    fn scalar_retardation_rme_against_gradient() {
        // α·∇[j_l(kr) C^l_m] = k/(2l+1) V_SR^l_m, checked for 1s–2s at l = 0 and
        // 1s–2p and 2p–3s at l = 1. The 2p1/2–2s pair is degenerate, so its element vanishes.
        let grid = test_grid();
        let s1 = orbitals(-1);
        let p1 = orbitals(1);
        let k = 0.5;
        let alpha = alpha_cartesian();
        for (a, b, l) in [(&s1[0], &s1[1], 0u32), (&s1[0], &p1[0], 1), (&p1[0], &s1[2], 1)] {
            let rme = scalar_retardation_rme(a, b, l, k, &grid);
            let (tma, tmb) = (1, 1);
            let tq = tma - tmb;
            let direct = brute_force(a, tma, b, tmb, &grid, |r, th, ph| {
                let x = [r * th.sin() * ph.cos(), r * th.sin() * ph.sin(), r * th.cos()];
                let g = grad_jc(l, tq / 2, k, x);
                let mut o = [[C64::new(0.0, 0.0); 4]; 4];
                for c in 0..3 {
                    for p in 0..4 {
                        for q in 0..4 {
                            o[p][q] += alpha[c][p][q] * g[c];
                        }
                    }
                }
                o
            });
            let we = parity_sign(((a.two_j() as i32 - tma) / 2) as i64)
                * wigner_3j(a.two_j(), 2 * l, b.two_j(), -tma, tq, tmb)
                * rme.value()
                * k
                / (2 * l + 1) as f64;
            assert!(direct.re.abs() < 1e-9, "{direct}");
            assert!((direct.im - we).abs() < 1e-7 * we.abs(), "l={l}: {direct} vs i·{we}");
        }
    }

    #[test]
    fn gaunt_small_k_is_linear() {
        let grid = test_grid();
        let s1 = orbitals(-1);
        // s–s through j_1 C^1 with K = 1; j_1(kr) ≈ kr/3.
        let pick = |k: f64| {
            gaunt_potential_rme(&s1[0], &s1[1], 1, k, &grid).into_iter().find(|r| r.rank == 1).unwrap().value()
        };
        let (v1, v2) = (pick(1e-4), pick(2e-4));
        assert!(v1 != 0.0);
        assert!((v2 / v1 - 2.0).abs() < 1e-6);
    }

    #[test]
    fn scalar_retardation_l0_uses_upper_branch_only() {
        assert_eq!(sr_coefficients(0)[1].1, 0.0);
        let grid = test_grid();
        let s1 = orbitals(-1);
        let rme = scalar_retardation_rme(&s1[0], &s1[1], 0, 0.5, &grid);
        assert_eq!(rme.terms.len(), 2);
        let p1 = orbitals(1);
        let forbidden = scalar_retardation_rme(&s1[0], &p1[0], 0, 0.5, &grid);
        assert_eq!(forbidden.value(), 0.0);
        assert!(forbidden.zero_reason.is_some());
    }

    #[test]
    fn coulomb_multipole_examples() {
        let z = 10.0;
        let grid = make_grid(150, 1e-5, 6.0).unwrap();
        let s = dirac_spectrum(z, -1, &grid, C_AU * 1000.0).unwrap();
        let s1 = s.iter().find(|o| o.positive).unwrap();
        // Direct 1s1s, J = 0.
        let x0 = coulomb_multipole_rme(s1, s1, s1, s1, 0, &grid);
        let direct = two_electron_factor(1, 1, 1, 1, 0, 0) * x0;
        assert!((direct - 6.25).abs() < 1e-4, "{direct}");
        assert_eq!(coulomb_multipole_rme(s1, s1, s1, s1, 1, &grid), 0.0);
    }

    #[test]
    fn coulomb_exchange_against_direct_quadrature() {
        // ⟨1s2s|1/r12|2s1s⟩ radial part R^0(1s2s; 2s1s) against a pointwise double sum
        // with the kink handled by splitting at r1 = r2 on a fine Gauss grid.
        let grid = test_grid();
        let s = orbitals(-1);
        let (a, b) = (&s[0], &s[1]);
        let x = coulomb_multipole_rme(a, b, b, a, 0, &grid);
        let ang = reduced_c(-1, 0, -1).powi(2);
        let r0 = x / ang;
        // Independent oracle: on each sublattice the density is interpolated in x = ln r by
        // 8-point Lagrange polynomials and integrated with Gauss–Legendre, with the kink of
        // 1/r_> split off exactly.
        // R^0 = ∫ ρ(r1) [ (1/r1)∫_0^{r1} ρ + ∫_{r1}^∞ ρ/r2 ].
        let rho = a.density(b);
        let (xg, wg) = crate::quad::gauss_legendre(16, 0.0, 1.0);
        let odd: Vec<usize> = (0..grid.len()).map(|i| 2 * i + 1).collect();
        let even: Vec<usize> = (0..=grid.len()).map(|e| 2 * e).collect();
        let lnr = |m: usize| grid.fine.r[m].ln();
        let piece = |lat: &[usize], j: usize, u0: f64, u1: f64, r1: f64| -> f64 {
            // Interval [lat[j], lat[j+1]], local coordinate u ∈ [u0, u1] ⊂ [0, 1].
            let s = (j.max(3) - 3).min(lat.len() - 8);
            let nodes: Vec<f64> = (0..8).map(|q| (s + q) as f64 - j as f64).collect();
            let (x0, x1) = (lnr(lat[j]), lnr(lat[j + 1]));
            let mut acc = 0.0;
            for (xq, wq) in xg.iter().zip(&wg) {
                let u = u0 + xq * (u1 - u0);
                let mut val = 0.0;
                for q in 0..8 {
                    let mut basis = 1.0;
                    for p in 0..8 {
                        if p != q {
                            basis *= (u - nodes[p]) / (nodes[q] - nodes[p]);
                        }
                    }
                    val += basis * rho[lat[s + q]];
                }
                let rr = (x0 + u * (x1 - x0)).exp();
                let kern = if rr < r1 { 1.0 / r1 } else { 1.0 / rr };
                acc += wq * (u1 - u0) * (x1 - x0) * rr * val * kern;
            }
            acc
        };
        let mut total = 0.0;
        for lat1 in [&odd, &even] {
            for &t in lat1.iter() {
                let r1 = grid.fine.r[t];
                let mut inner = 0.0;
                for lat2 in [&odd, &even] {
                    for j in 0..lat2.len() - 1 {
                        if lat2[j] < t && t < lat2[j + 1] {
                            inner += piece(lat2, j, 0.0, 0.5, r1) + piece(lat2, j, 0.5, 1.0, r1);
                        } else {
                            inner += piece(lat2, j, 0.0, 1.0, r1);
                        }
                    }
                }
                total += grid.fine.w[t] * rho[t] * inner;
            }
        }
        assert!(((r0 - total) / r0).abs() < 1e-5, "{r0} vs {total}");
    }

    #[test]
    fn f_assembly_weights() {
        let f = coulomb_gauge_f_assemble(0);
        assert_eq!(f.terms.len(), 2);
        assert_eq!(f.terms[0].weight, -1.0);
        assert_eq!(f.terms[1].weight, 1.0);
        let f = coulomb_gauge_f_assemble(2);
        let w: Vec<f64> = f.terms.iter().filter(|t| t.l == 2).map(|t| t.weight).collect();
        assert_eq!(w, vec![-5.0, 0.2]);
    }

    #[test]
    fn gaunt_multipoles_match_feynman_closed_form() {
        // Σ_l −(2l+1) j_l j_l P_l (times k and the unit factor) against the α·α part
        // of f_F = −(c/π)(1 − α·α) sin(k r12)/r12, at sample geometries.
        let c = C_AU;
        let f = coulomb_gauge_f_assemble(40);
        for (k, r1, r2, cos) in [(0.7, 1.0, 0.4, 0.3), (2.0, 0.3, 0.8, -0.9), (0.1, 2.0, 2.5, 0.99)] {
            let a = bessel_j_all(40, k * r1);
            let b = bessel_j_all(40, k * r2);
            let gaunt: f64 = f
                .terms
                .iter()
                .filter(|t| t.kind == InteractionKind::Gaunt)
                .map(|t| SeparatedInteraction::coefficient(t, k, c) * a[t.l as usize] * b[t.l as usize] * legendre_p(t.l, cos))
                .sum();
            let r12 = (r1 * r1 + r2 * r2 - 2.0 * r1 * r2 * cos).sqrt();
            // Coefficient of α₁·α₂ in f_F.
            let feynman = c / PI * (k * r12).sin() / r12;
            assert!((gaunt - feynman).abs() < 1e-10 * feynman.abs(), "{gaunt} vs {feynman}");
        }
    }

    fn kappas() -> impl Strategy<Value = i32> {
        prop::sample::select(vec![-1, 1, -2, 2, -3])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn hermiticity_of_alpha_elements(ka in kappas(), kb in kappas(), ia in 0usize..4, ib in 0usize..4, l in 0u32..4, k in 0.1f64..3.0) {
            let grid = make_grid(60, 1e-5, 8.0).unwrap();
            let a = &dirac_spectrum(3.0, ka, &grid, C_AU).unwrap().into_iter().filter(|o| o.positive).nth(ia).unwrap();
            let b = &dirac_spectrum(3.0, kb, &grid, C_AU).unwrap().into_iter().filter(|o| o.positive).nth(ib).unwrap();
            let ab = gaunt_potential_rme(a, b, l, k, &grid);
            let ba = gaunt_potential_rme(b, a, l, k, &grid);
            for (x, y) in ab.iter().zip(&ba) {
                // T† = (-1)^{L+1-K} T for {C^L α}^K; with the factor i this gives
                // R_ba = -(-1)^{j_b - j_a} (-1)^{L+1-K} R_ab.
                let phase = -parity_sign(((b.two_j() as i64 - a.two_j() as i64) / 2) + (l as i64 + 1 - x.rank as i64));
                prop_assert!((y.value() - phase * x.value()).abs() < 1e-12 * (1.0 + x.value().abs()));
            }
            let sab = scalar_retardation_rme(a, b, l, k, &grid).value();
            let sba = scalar_retardation_rme(b, a, l, k, &grid).value();
            let phase = -parity_sign((b.two_j() as i64 - a.two_j() as i64) / 2);
            prop_assert!((sba - phase * sab).abs() < 1e-12 * (1.0 + sab.abs()));
        }

        #[test]
        fn selection_rules_are_exact_zeros(ka in kappas(), kb in kappas(), l in 0u32..4) {
            let grid = make_grid(40, 1e-5, 8.0).unwrap();
            let a = &dirac_spectrum(3.0, ka, &grid, C_AU).unwrap()[45];
            let b = &dirac_spectrum(3.0, kb, &grid, C_AU).unwrap()[45];
            for r in gaunt_potential_rme(a, b, l, 1.0, &grid) {
                if r.zero_reason.is_some() {
                    prop_assert_eq!(r.value(), 0.0);
                }
                let parity_ok = (a.l() + b.l() + l + 1) % 2 == 0;
                let tri_ok = triangle(a.two_j(), 2 * r.rank, b.two_j());
                prop_assert_eq!(r.zero_reason.is_none(), parity_ok && tri_ok);
            }
        }
    }
}
