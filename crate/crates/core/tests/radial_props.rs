mod common;

use proptest::prelude::*;
use qedmbpt::constants::C_AU;
use qedmbpt::radial::{completeness_defect, dirac_spectrum, make_grid, overlap, sommerfeld_energy};

fn kappas() -> impl Strategy<Value = i32> {
    prop::sample::select(vec![-1, 1, -2, 2, -3])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn orthonormal_and_complete(kappa in kappas(), n in 40usize..90, z in 1.0f64..40.0) {
        let grid = make_grid(n, 1e-6, 60.0 / z).unwrap();
        let spec = dirac_spectrum(z, kappa, &grid, C_AU).unwrap();
        prop_assert_eq!(spec.len(), 2 * n);
        let bound: Vec<_> = spec.iter().filter(|o| o.positive).take(5).collect();
        for (i, a) in bound.iter().enumerate() {
            for (j, b) in bound.iter().enumerate() {
                let s = overlap(&grid, a, b);
                prop_assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10, "{i} {j} {s}");
            }
        }
        prop_assert!(completeness_defect(&grid, &spec) < 1e-10);
    }

    #[test]
    fn ground_states_track_sommerfeld(kappa in kappas(), z in 2.0f64..60.0) {
        let grid = make_grid(150, 1e-6, 60.0 / z).unwrap();
        let spec = dirac_spectrum(z, kappa, &grid, C_AU).unwrap();
        let lowest = spec.iter().find(|o| o.positive).unwrap();
        let n = if kappa < 0 { -kappa } else { kappa + 1 } as u32;
        let exact = sommerfeld_energy(z, n, kappa, C_AU);
        prop_assert!(common::rel(lowest.energy, exact) < 1e-6, "{} vs {exact}", lowest.energy);
    }
}

#[test]
fn nonrelativistic_limit_removes_fine_structure() {
    // At c×100 the remaining fine structure is about 1e-7 relative; larger c is
    // limited by eigenvalue roundoff instead.
    let c = 100.0 * C_AU;
    let grid = make_grid(150, 1e-5, 6.0).unwrap();
    let lowest = |kappa| dirac_spectrum(10.0, kappa, &grid, c).unwrap().into_iter().find(|o| o.positive).unwrap().energy;
    for (a, b) in [(1, -2), (2, -3)] {
        assert!(common::rel(lowest(a), lowest(b)) < 1e-6, "{a} {b}: {} vs {}", lowest(a), lowest(b));
    }
}

#[test]
fn no_spurious_bound_states() {
    // On a 6 bohr box at Z = 10 the s levels up to n = 4 are resolved; the count of
    // states with ε < −Z²/(2·5²) must be exactly four.
    let grid = make_grid(150, 1e-6, 6.0).unwrap();
    let spec = dirac_spectrum(10.0, -1, &grid, C_AU).unwrap();
    let count = spec.iter().filter(|o| o.positive && o.energy < -100.0 / 50.0).count();
    assert_eq!(count, 4);
    for (n, o) in (1..=4).zip(spec.iter().filter(|o| o.positive)) {
        let exact = sommerfeld_energy(10.0, n, -1, C_AU);
        assert!(common::rel(o.energy, exact) < 1e-2, "n={n}: {} vs {exact}", o.energy);
    }
}
