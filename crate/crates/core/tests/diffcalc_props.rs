use nalgebra::DMatrix;
use proptest::prelude::*;
use qedmbpt::diffcalc::{degenerate_limit, diff_ratio_n, leibniz_expand, MatrixPolynomial};

/// Complete homogeneous symmetric polynomial `h_k(x)`.
fn h(k: usize, x: &[f64]) -> f64 {
    match (k, x) {
        (0, _) => 1.0,
        (_, []) => 0.0,
        (_, [x0, rest @ ..]) => h(k, rest) + x0 * h(k - 1, x),
    }
}

fn distinct(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-40i32..40, n).prop_filter("distinct", |v| {
        let mut s = v.clone();
        s.sort();
        s.dedup();
        s.len() == v.len()
    })
    .prop_map(|v| v.into_iter().map(|i| i as f64 / 20.0).collect())
}

fn matrix_poly(dim: usize) -> impl Strategy<Value = MatrixPolynomial> {
    (0usize..=5).prop_flat_map(move |deg| {
        prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim * dim), deg + 1)
            .prop_map(move |cs| MatrixPolynomial::new(cs.into_iter().map(|c| DMatrix::from_vec(dim, dim, c)).collect()))
    })
}

fn close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> bool {
    (a - b).amax() <= tol * b.amax().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn monomial_ratio_is_complete_symmetric(m in 0usize..8, n in 0usize..4, e in distinct(4)) {
        let e = &e[..=n];
        let got = diff_ratio_n(&MatrixPolynomial::monomial(m), e).unwrap()[(0, 0)];
        let want = if m >= n { h(m - n, e) } else { 0.0 };
        prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
    }

    #[test]
    fn leibniz_matches_product_ratio(a in matrix_poly(2), b in matrix_poly(2), n in 1usize..=3, e in distinct(4)) {
        let e = &e[..=n];
        let lhs = leibniz_expand(n, &a, &b, e).unwrap();
        let rhs = diff_ratio_n(&a.mul(&b), e).unwrap();
        prop_assert!(close(&lhs, &rhs, 1e-12), "{lhs} vs {rhs}");
    }

    #[test]
    fn ratio_is_symmetric_in_energies(p in matrix_poly(1), e in distinct(4), seed in 0usize..24) {
        let mut perm = e.clone();
        let mut s = seed;
        for i in (1..perm.len()).rev() {
            perm.swap(i, s % (i + 1));
            s /= i + 1;
        }
        let a = diff_ratio_n(&p, &e).unwrap();
        let b = diff_ratio_n(&p, &perm).unwrap();
        prop_assert!(close(&a, &b, 1e-11));
    }

    #[test]
    fn near_degenerate_tuples_approach_the_limit(p in matrix_poly(2), n in 1usize..=3, e0 in -1.0f64..1.0) {
        let limit = degenerate_limit(&p, e0, n).value;
        let err = |h: f64| {
            let e: Vec<f64> = (0..=n).map(|i| e0 + i as f64 * h).collect();
            (diff_ratio_n(&p, &e).unwrap() - &limit).amax()
        };
        let (coarse, fine) = (err(0.04), err(0.02));
        prop_assert!(fine <= 0.6 * coarse + 1e-9, "{coarse} -> {fine}");
    }
}
