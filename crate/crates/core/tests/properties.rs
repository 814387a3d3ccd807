use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;

use tilted_lattice::lattice::{Basis, DensityMatrix, InverseTemperature, LatticeConfig};
use tilted_lattice::propagator::liouvillian_rhs;
use tilted_lattice::relaxation::{apply_dissipator, RelaxationModel};
use tilted_lattice::specfun::{bessel_i_ratio, bessel_j};

fn state(dim: usize, entries: &[(f64, f64)]) -> DensityMatrix {
    let a = Array2::from_shape_fn((dim, dim), |(i, j)| {
        let (re, im) = entries[(i * dim + j) % entries.len()];
        Complex64::new(re, im)
    });
    let mut rho = a.dot(&a.t().mapv(|z| z.conj()));
    let tr = rho.diag().sum();
    rho.mapv_inplace(|z| z / tr);
    DensityMatrix::new(rho, Basis::Bloch).unwrap()
}

fn model(kind: usize, config: &LatticeConfig) -> RelaxationModel {
    match kind {
        0 => RelaxationModel::simple(config),
        1 => RelaxationModel::sink(config).unwrap(),
        2 => RelaxationModel::uniform(config).unwrap(),
        _ => RelaxationModel::thermal(config).unwrap(),
    }
}

fn max_antihermitian(m: &Array2<Complex64>) -> f64 {
    let mut worst: f64 = 0.0;
    for ((i, j), z) in m.indexed_iter() {
        worst = worst.max((z - m[[j, i]].conj()).norm());
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generator_is_trace_free_and_hermitian(
        sites in 4usize..12,
        kind in 0usize..4,
        force in -1.0f64..1.0,
        gamma in 0.01f64..1.0,
        beta_j in 0.0f64..8.0,
        t in 0.0f64..20.0,
        entries in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 16),
    ) {
        let config = LatticeConfig::new(sites, 1.0, force, gamma, InverseTemperature::Finite(beta_j)).unwrap();
        let rho = state(sites, &entries);
        let rhs = liouvillian_rhs(&rho, t, &config, &model(kind, &config)).unwrap();
        prop_assert!(rhs.diag().sum().norm() < 1e-13);
        prop_assert!(max_antihermitian(&rhs) < 1e-13);
    }

    #[test]
    fn dissipator_keeps_populations_balanced(
        sites in 4usize..12,
        kind in 0usize..4,
        beta_j in 0.0f64..8.0,
        entries in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 16),
    ) {
        let config = LatticeConfig::new(sites, 1.0, 0.0, 0.3, InverseTemperature::Finite(beta_j)).unwrap();
        let d = apply_dissipator(&state(sites, &entries), &model(kind, &config)).unwrap();
        prop_assert!(d.diag().sum().norm() < 1e-14);
        prop_assert!(d.diag().iter().all(|z| z.im.abs() < 1e-15));
    }

    #[test]
    fn basis_round_trip(
        sites in 2usize..20,
        entries in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 16),
    ) {
        let rho = state(sites, &entries);
        let back = rho.to_basis(Basis::Wannier).to_basis(Basis::Bloch);
        let err = rho.matrix().iter().zip(back.matrix()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-14);
    }

    #[test]
    fn bessel_j_three_term_recurrence(n in 1i32..40, x in 0.1f64..60.0) {
        let lhs = bessel_j(n - 1, x).unwrap() + bessel_j(n + 1, x).unwrap();
        let rhs = 2.0 * n as f64 / x * bessel_j(n, x).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn bessel_i_ratio_is_a_probability_weight(n in 0i32..30, x in 0.0f64..500.0) {
        let r = bessel_i_ratio(n, x).unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
        if n > 0 {
            prop_assert!(r <= bessel_i_ratio(n - 1, x).unwrap());
        }
    }
}
