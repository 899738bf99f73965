//! Difference-ratio calculus for energy-dependent operators.
//!
//! The first-order ratio is `δA = (A(E) - A(E')) / (E - E')`. Higher orders nest
//! with respect to the first energy argument, which makes them the ordinary divided
//! differences over the tuple `(E, E', E'', ...)`. Coinciding energies go to the
//! Taylor limit `(1/n!) dⁿA/dEⁿ`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Energies closer than this are treated as degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-8;

/// Energy-dependent square matrix.
pub trait EnergyFunction {
    fn dim(&self) -> usize;

    fn eval(&self, e: f64) -> DMatrix<f64>;

    /// `(1/n!) dⁿf/dEⁿ` in closed form, when available.
    fn taylor_coeff(&self, _e: f64, _n: usize) -> Option<DMatrix<f64>> {
        None
    }

    /// Highest derivative order that is trustworthy.
    fn smoothness(&self) -> usize {
        usize::MAX
    }
}

/// Matrix polynomial `Σ_k C_k E^k`.
#[derive(Clone, Debug)]
pub struct MatrixPolynomial {
    pub coeffs: Vec<DMatrix<f64>>,
}

impl MatrixPolynomial {
    pub fn new(coeffs: Vec<DMatrix<f64>>) -> Self {
        assert!(!coeffs.is_empty(), "polynomial needs at least one coefficient");
        let d = coeffs[0].nrows();
        assert!(coeffs.iter().all(|c| c.nrows() == d && c.ncols() == d));
        Self { coeffs }
    }

    /// Scalar polynomial viewed as a 1×1 matrix function.
    pub fn scalar(coeffs: &[f64]) -> Self {
        Self::new(coeffs.iter().map(|&c| DMatrix::from_element(1, 1, c)).collect())
    }

    /// Scalar monomial `E^m`.
    pub fn monomial(m: usize) -> Self {
        let mut c = vec![0.0; m + 1];
        c[m] = 1.0;
        Self::scalar(&c)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Product polynomial `self(E) · other(E)`.
    pub fn mul(&self, other: &MatrixPolynomial) -> MatrixPolynomial {
        let d = self.dim();
        let mut out = vec![DMatrix::zeros(d, d); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        MatrixPolynomial::new(out)
    }
}

impl EnergyFunction for MatrixPolynomial {
    fn dim(&self) -> usize {
        self.coeffs[0].nrows()
    }

    fn eval(&self, e: f64) -> DMatrix<f64> {
        let mut acc = self.coeffs.last().unwrap().clone();
        for c in self.coeffs.iter().rev().skip(1) {
            acc = acc * e + c;
        }
        acc
    }

    fn taylor_coeff(&self, e: f64, n: usize) -> Option<DMatrix<f64>> {
        let d = self.dim();
        let mut acc = DMatrix::zeros(d, d);
        for (k, c) in self.coeffs.iter().enumerate().skip(n) {
            acc += c * (binomial(k, n) * e.powi((k - n) as i32));
        }
        Some(acc)
    }
}

/// Closure-backed energy function.
pub struct FnEnergy<F: Fn(f64) -> DMatrix<f64>> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64) -> DMatrix<f64>> FnEnergy<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(f64) -> DMatrix<f64>> EnergyFunction for FnEnergy<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, e: f64) -> DMatrix<f64> {
        let m = (self.f)(e);
        debug_assert_eq!(m.nrows(), self.dim);
        m
    }
}

/// Pointwise product `A(E) B(E)` of two energy functions.
pub struct Product<'a> {
    pub a: &'a dyn EnergyFunction,
    pub b: &'a dyn EnergyFunction,
}

impl EnergyFunction for Product<'_> {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn eval(&self, e: f64) -> DMatrix<f64> {
        self.a.eval(e) * self.b.eval(e)
    }

    fn taylor_coeff(&self, e: f64, n: usize) -> Option<DMatrix<f64>> {
        let mut acc = DMatrix::zeros(self.dim(), self.dim());
        for m in 0..=n {
            acc += self.a.taylor_coeff(e, m)? * self.b.taylor_coeff(e, n - m)?;
        }
        Some(acc)
    }
}

/// Difference ratio of order `n` with the energies it was taken over.
#[derive(Clone, Debug)]
pub struct DiffRatio {
    pub order: usize,
    pub energies: Vec<f64>,
    pub value: DMatrix<f64>,
}

impl DiffRatio {
    /// Evaluates over an arbitrary tuple, routing degenerate clusters to the Taylor limit.
    pub fn compute(f: &dyn EnergyFunction, energies: &[f64]) -> DiffRatio {
        assert!(!energies.is_empty());
        DiffRatio {
            order: energies.len() - 1,
            energies: energies.to_vec(),
            value: divided_difference(f, energies),
        }
    }
}

/// Result of a degenerate-limit evaluation.
#[derive(Clone, Debug)]
pub struct DegenerateLimit {
    pub value: DMatrix<f64>,
    /// Max-norm error estimate; zero when the closed form was used.
    pub error_estimate: f64,
    pub analytic: bool,
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

fn check_distinct(energies: &[f64]) -> Result<()> {
    for (i, &a) in energies.iter().enumerate() {
        for &b in &energies[i + 1..] {
            if (a - b).abs() < DEGENERACY_THRESHOLD {
                return Err(Error::DegenerateEnergies(a, b));
            }
        }
    }
    Ok(())
}

/// First-order ratio `(f(E) - f(E')) / (E - E')`.
pub fn diff_ratio(f: &dyn EnergyFunction, energies: (f64, f64)) -> Result<DMatrix<f64>> {
    let (e0, e1) = energies;
    check_distinct(&[e0, e1])?;
    Ok((f.eval(e0) - f.eval(e1)) / (e0 - e1))
}

/// Nested ratio `δ_{EE'} δ_{EE''} ... f(E)` over pairwise distinct energies.
pub fn diff_ratio_n(f: &dyn EnergyFunction, energies: &[f64]) -> Result<DMatrix<f64>> {
    assert!(!energies.is_empty(), "need at least one energy");
    check_distinct(energies)?;
    let mut table: Vec<DMatrix<f64>> = energies.iter().map(|&e| f.eval(e)).collect();
    let n = energies.len();
    for level in 1..n {
        for i in 0..n - level {
            let num = &table[i] - &table[i + 1];
            table[i] = num / (energies[i] - energies[i + level]);
        }
    }
    Ok(table.swap_remove(0))
}

/// `Σ_m δᵐA · δ^{n-m}B`, where the left factor takes the leading energies
/// `(E, ..., E^m)` and the right factor the trailing ones `(E^m, ..., E^n)`.
pub fn leibniz_expand(
    n: usize,
    a: &dyn EnergyFunction,
    b: &dyn EnergyFunction,
    energies: &[f64],
) -> Result<DMatrix<f64>> {
    assert_eq!(energies.len(), n + 1, "order n needs n+1 energies");
    check_distinct(energies)?;
    let mut acc = DMatrix::zeros(a.dim(), b.dim());
    for m in 0..=n {
        acc += diff_ratio_n(a, &energies[..=m])? * diff_ratio_n(b, &energies[m..])?;
    }
    Ok(acc)
}

/// Fornberg weights for the `order`-th derivative on the given offsets.
fn fd_weights(offsets: &[f64], order: usize) -> Vec<f64> {
    let n = offsets.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = offsets[0];
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = offsets[i];
        for j in 0..i {
            let c3 = offsets[i] - offsets[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|row| row[order]).collect()
}

fn central_derivative(f: &dyn EnergyFunction, e: f64, n: usize, h: f64) -> DMatrix<f64> {
    let p = 2.max(n.div_ceil(2) + usize::from(n > 4));
    let offsets: Vec<f64> = (-(p as i64)..=p as i64).map(|i| i as f64).collect();
    let w = fd_weights(&offsets, n);
    let mut acc = DMatrix::zeros(f.dim(), f.dim());
    for (o, wi) in offsets.iter().zip(&w) {
        if *wi != 0.0 {
            acc += f.eval(e + o * h) * *wi;
        }
    }
    acc / h.powi(n as i32)
}

/// `(1/n!) dⁿf/dEⁿ` at `e`: closed form when the function provides it, otherwise a
/// 5-point central stencil with one Richardson halving.
pub fn degenerate_limit(f: &dyn EnergyFunction, e: f64, n: usize) -> DegenerateLimit {
    if n == 0 {
        return DegenerateLimit { value: f.eval(e), error_estimate: 0.0, analytic: true };
    }
    if let Some(value) = f.taylor_coeff(e, n) {
        return DegenerateLimit { value, error_estimate: 0.0, analytic: true };
    }
    let h = 1e-4_f64.max(1e-4 * e.abs());
    let p = 2.max(n.div_ceil(2) + usize::from(n > 4));
    let q = (2 * p + 2 - n - (n % 2)) as i32;
    let coarse = central_derivative(f, e, n, h);
    let fine = central_derivative(f, e, n, 0.5 * h);
    let scale = 2f64.powi(q);
    let value = (&fine * scale - &coarse) / (scale - 1.0);
    let error_estimate = (&fine - &coarse).amax() / (scale - 1.0) / factorial(n);
    DegenerateLimit { value: value / factorial(n), error_estimate, analytic: false }
}

/// Divided difference over any tuple. Clusters of energies within the threshold
/// collapse to the Taylor limit at their mean; distinct clusters are joined by the
/// first-order rule.
pub fn divided_difference(f: &dyn EnergyFunction, energies: &[f64]) -> DMatrix<f64> {
    assert!(!energies.is_empty());
    let mut sorted = energies.to_vec();
    sorted.sort_by(f64::total_cmp);
    dd_sorted(f, &sorted)
}

fn dd_sorted(f: &dyn EnergyFunction, x: &[f64]) -> DMatrix<f64> {
    let n = x.len() - 1;
    if n == 0 {
        return f.eval(x[0]);
    }
    let span = x[n] - x[0];
    if span < DEGENERACY_THRESHOLD {
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        return degenerate_limit(f, mean, n).value;
    }
    (dd_sorted(f, &x[1..]) - dd_sorted(f, &x[..n])) / span
}

/// Ratio of a product of effective interactions in which only the rightmost factor
/// depends on the differentiated energy pair; the others stay at `frozen`.
pub fn veff_power_diff(
    chain: &[&dyn EnergyFunction],
    energies: (f64, f64),
    frozen: &[f64],
) -> Result<DMatrix<f64>> {
    assert!(!chain.is_empty(), "chain must hold at least one factor");
    assert_eq!(frozen.len(), chain.len() - 1, "one frozen energy per left factor");
    let last = chain.len() - 1;
    let mut acc = diff_ratio(chain[last], energies)?;
    for (f, &e) in chain[..last].iter().zip(frozen).rev() {
        acc = f.eval(e) * acc;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(m: &DMatrix<f64>) -> f64 {
        m[(0, 0)]
    }

    #[test]
    fn first_order_examples() {
        let sq = MatrixPolynomial::monomial(2);
        assert_eq!(s(&diff_ratio(&sq, (2.0, 3.0)).unwrap()), 5.0);
        let cube = MatrixPolynomial::monomial(3);
        assert_eq!(s(&diff_ratio(&cube, (1.0, 2.0)).unwrap()), 7.0);
        let c = MatrixPolynomial::new(vec![DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])]);
        assert_eq!(diff_ratio(&c, (0.3, -1.2)).unwrap(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn degenerate_pair_is_rejected() {
        let sq = MatrixPolynomial::monomial(2);
        assert!(matches!(diff_ratio(&sq, (1.0, 1.0 + 1e-9)), Err(Error::DegenerateEnergies(..))));
        assert!(diff_ratio_n(&sq, &[1.0, 2.0, 1.0]).is_err());
    }

    #[test]
    fn nested_examples() {
        let cube = MatrixPolynomial::monomial(3);
        assert!((s(&diff_ratio_n(&cube, &[1.0, 2.0, 3.0]).unwrap()) - 6.0).abs() < 1e-14);
        let sq = MatrixPolynomial::monomial(2);
        assert!((s(&diff_ratio_n(&sq, &[-0.7, 0.4, 5.5]).unwrap()) - 1.0).abs() < 1e-14);
        // Order zero is plain evaluation.
        assert_eq!(s(&diff_ratio_n(&cube, &[1.5]).unwrap()), 1.5f64.powi(3));
    }

    #[test]
    fn fourth_power_against_explicit_nesting() {
        let f = |e: f64| e.powi(4);
        let (e0, e1, e2) = (1.0, 2.0, 3.0);
        let inner = |x: f64| (f(x) - f(e2)) / (x - e2);
        let expect = (inner(e0) - inner(e1)) / (e0 - e1);
        let got = s(&diff_ratio_n(&MatrixPolynomial::monomial(4), &[e0, e1, e2]).unwrap());
        assert!((got - expect).abs() < 1e-13);
    }

    #[test]
    fn leibniz_examples() {
        let id = MatrixPolynomial::new(vec![DMatrix::identity(2, 2)]);
        for n in 1..4 {
            let e: Vec<f64> = (0..=n).map(|i| 0.5 + i as f64).collect();
            assert_eq!(leibniz_expand(n, &id, &id, &e).unwrap(), DMatrix::zeros(2, 2));
        }
        let lin = MatrixPolynomial::monomial(1);
        assert!((s(&leibniz_expand(1, &lin, &lin, &[2.0, 3.0]).unwrap()) - 5.0).abs() < 1e-14);
        let a = MatrixPolynomial::monomial(2);
        let b = MatrixPolynomial::monomial(3);
        let lhs = leibniz_expand(2, &a, &b, &[1.0, 2.0, 3.0]).unwrap();
        let rhs = diff_ratio_n(&MatrixPolynomial::monomial(5), &[1.0, 2.0, 3.0]).unwrap();
        assert!((s(&lhs) - s(&rhs)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_examples() {
        let cube = MatrixPolynomial::monomial(3);
        assert_eq!(s(&degenerate_limit(&cube, 2.0, 1).value), 12.0);
        assert_eq!(s(&degenerate_limit(&cube, 2.0, 2).value), 6.0);
        let h = 1e-3;
        let near = s(&diff_ratio_n(&cube, &[2.0, 2.0 + h, 2.0 + 2.0 * h]).unwrap());
        assert!((near - 6.0).abs() < 4.0 * h);
    }

    #[test]
    fn finite_difference_limit_matches_closed_form() {
        let f = FnEnergy::new(1, |e: f64| DMatrix::from_element(1, 1, (0.3 * e).exp() / (2.0 - e)));
        // Cancellation grows like eps/h^n, so the stencil is only checked to n = 3.
        for (n, tol) in [(0, 1e-15), (1, 1e-9), (2, 1e-6), (3, 1e-3)] {
            let fd = degenerate_limit(&f, 0.4, n);
            // Taylor coefficient of exp(a e)/(b - e) via the product rule.
            let (a, b, e) = (0.3f64, 2.0f64, 0.4f64);
            let mut exact = 0.0;
            for m in 0..=n {
                let exp_part = a.powi(m as i32) * (a * e).exp() / factorial(m);
                let inv_part = 1.0 / (b - e).powi((n - m + 1) as i32);
                exact += exp_part * inv_part;
            }
            assert!((s(&fd.value) - exact).abs() < tol * exact.abs().max(1.0), "n={n}");
        }
    }

    #[test]
    fn mixed_cluster_routing() {
        let p = MatrixPolynomial::scalar(&[0.5, -1.0, 2.0, 0.0, 0.25]);
        let exact = |x: &[f64]| {
            // E^4/4 + 2E^2 - E + 1/2 expanded through complete homogeneous sums.
            let h = |k: usize| -> f64 { complete_homogeneous(x, k) };
            let n = x.len() - 1;
            let c = [0.5, -1.0, 2.0, 0.0, 0.25];
            (n..c.len()).map(|m| c[m] * h(m - n)).sum::<f64>()
        };
        let tuple = [1.0, 1.0, 3.0, 1.0];
        assert!((s(&divided_difference(&p, &tuple)) - exact(&tuple)).abs() < 1e-12);
        let tuple = [0.2, 0.2, -0.4];
        assert!((s(&divided_difference(&p, &tuple)) - exact(&tuple)).abs() < 1e-12);
    }

    fn complete_homogeneous(x: &[f64], k: usize) -> f64 {
        // h_k(x) = Σ over multisets of size k.
        fn rec(x: &[f64], k: usize) -> f64 {
            if k == 0 {
                return 1.0;
            }
            if x.is_empty() {
                return 0.0;
            }
            x[0] * rec(x, k - 1) + rec(&x[1..], k)
        }
        rec(x, k)
    }

    #[test]
    fn frozen_left_factor_examples() {
        let lin = MatrixPolynomial::monomial(1);
        let single = veff_power_diff(&[&lin], (2.0, 5.0), &[]).unwrap();
        assert_eq!(single, diff_ratio(&lin, (2.0, 5.0)).unwrap());
        let (e, ep) = (1.7, -0.3);
        let two = veff_power_diff(&[&lin, &lin], (e, ep), &[e]).unwrap();
        assert!((s(&two) - (e * e - e * ep) / (e - ep)).abs() < 1e-14);
    }
}
