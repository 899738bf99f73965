#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use qedmbpt::modelspace::{build_projectors, resolvent, MatrixModel};
use rand::Rng;

/// `max_a ‖Γ_Q(E_a) V‖₂` over the model energies.
pub fn coupling_norm(model: &MatrixModel) -> f64 {
    let proj = build_projectors(model);
    model
        .model_energies()
        .iter()
        .map(|&e| (resolvent(e, model, &proj).unwrap() * &model.v).singular_values().max())
        .fold(0.0, f64::max)
}

/// Random symmetric model of dimension `d` with the first `dp` states as model
/// space, scaled so that [`coupling_norm`] equals `strength`.
pub fn random_model(rng: &mut impl Rng, d: usize, dp: usize, strength: f64) -> MatrixModel {
    let mut h0 = DVector::zeros(d);
    for i in 0..d {
        h0[i] = if i < dp { rng.gen_range(-0.3..0.3) } else { rng.gen_range(1.5..4.0) };
    }
    let mut v = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let x: f64 = rng.gen_range(-1.0..1.0);
            v[(i, j)] = x;
            v[(j, i)] = x;
        }
    }
    let unit = MatrixModel::new(h0.clone(), v.clone(), (0..dp).collect()).unwrap();
    let s = strength / coupling_norm(&unit);
    MatrixModel::new(h0, v * s, (0..dp).collect()).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
