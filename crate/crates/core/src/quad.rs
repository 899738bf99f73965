//! Gauss–Legendre rules on finite intervals.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;

/// Nodes (ascending) and weights of the `n`-point rule on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let n = NonZeroUsize::new(n).expect("rule needs at least one node");
    let mut pairs: Vec<(f64, f64)> = GaussLegendre::new(n).as_node_weight_pairs().to_vec();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    pairs.iter().map(|&(x, w)| (mid + half * x, half * w)).unzip()
}
