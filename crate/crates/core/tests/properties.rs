use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use tanhom::density::{laminate_oracle, tf_hom, TfHomOptions};
use tanhom::integrand::{Integrand, StepProfile};
use tanhom::io::fmt_f64;
use tanhom::manifold::{circle_point, Manifold};

fn manifolds() -> impl Strategy<Value = Manifold> {
    prop_oneof![
        Just(Manifold::circle()),
        (3usize..6).prop_map(|d| Manifold::sphere(d).unwrap()),
        (1usize..4).prop_map(|k| Manifold::circle_product(k).unwrap()),
    ]
}

fn ambient(m: &Manifold) -> impl Strategy<Value = DVector<f64>> {
    proptest::collection::vec(-3.0..3.0f64, m.ambient_dim).prop_map(DVector::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_idempotent((m, x) in manifolds().prop_flat_map(|m| { let a = ambient(&m); (Just(m), a) })) {
        prop_assume!(m.distance(&x) < 0.9);
        let s = m.project(&x).unwrap();
        prop_assert!(m.constraint_residual(&s) <= 1e-12);
        let again = m.project(&s).unwrap();
        prop_assert!((&again - &s).norm() <= 1e-14);
    }

    #[test]
    fn tangent_data_is_consistent((m, x) in manifolds().prop_flat_map(|m| { let a = ambient(&m); (Just(m), a) })) {
        prop_assume!(m.distance(&x) < 0.9);
        let s = m.project(&x).unwrap();
        let p = m.tangent_projector(&s).unwrap();
        let b = m.tangent_basis(&s).unwrap();
        prop_assert!((&p * &p - &p).norm() <= 1e-12);
        prop_assert!((&p - p.transpose()).norm() <= 1e-12);
        prop_assert!((b.transpose() * &b - DMatrix::identity(m.intrinsic_dim, m.intrinsic_dim)).norm() <= 1e-12);
        prop_assert!((&b * b.transpose() - &p).norm() <= 1e-12);
        prop_assert!((&p * &s).norm() <= 1e-12);
    }

    #[test]
    fn doubles_survive_formatting(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
        prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn laminate_cells_reproduce_the_closed_form(
        theta in 0.0..std::f64::consts::TAU,
        c1 in -3.0..3.0f64,
        c2 in -3.0..3.0f64,
        lo in 0.5..2.0f64,
        hi in 0.5..4.0f64,
        bv in 0.5..2.0f64,
    ) {
        let a = StepProfile::new(vec![0.5], vec![lo, hi]).unwrap();
        let b = StepProfile::constant(bv).unwrap();
        let f = Integrand::laminate_quadratic(a.clone(), b.clone(), 2).unwrap();
        let s = circle_point(theta);
        let xi = Manifold::circle().tangent_basis(&s).unwrap() * DMatrix::from_row_slice(1, 2, &[c1, c2]);
        let opts = TfHomOptions { t_list: vec![1], n: 8, tol_grad: 1e-12, ..Default::default() };
        let v = tf_hom(&f, &Manifold::circle(), &s, &xi, &opts).unwrap().value;
        let o = laminate_oracle(&a, &b, &s, &xi).unwrap();
        prop_assert!((v - o).abs() <= 1e-8 * (1.0 + o), "{} vs {}", v, o);
    }

    #[test]
    fn isotropic_density_is_frame_invariant(theta in 0.0..std::f64::consts::TAU, c in -3.0..3.0f64) {
        let f = Integrand::isotropic(1.0, 2.0, 1, 2).unwrap();
        let s = circle_point(theta);
        let xi = DMatrix::from_column_slice(2, 1, &[-s[1] * c, s[0] * c]);
        let v = tf_hom(&f, &Manifold::circle(), &s, &xi, &TfHomOptions::default()).unwrap().value;
        prop_assert!((v - c * c).abs() <= 1e-8 * (1.0 + c * c));
    }

    #[test]
    fn quadratic_densities_are_two_homogeneous(theta in 0.0..std::f64::consts::TAU, c in -2.0..2.0f64, lambda in -3.0..3.0f64) {
        let a = StepProfile::new(vec![0.25, 0.5], vec![1.0, 3.0, 2.0]).unwrap();
        let f = Integrand::laminate_quadratic(a, StepProfile::constant(1.5).unwrap(), 2).unwrap();
        let m = Manifold::circle();
        let s = circle_point(theta);
        let xi = m.tangent_basis(&s).unwrap() * DMatrix::from_row_slice(1, 2, &[c, 1.0]);
        let opts = TfHomOptions { t_list: vec![1], n: 8, tol_grad: 1e-12, ..Default::default() };
        let v1 = tf_hom(&f, &m, &s, &xi, &opts).unwrap().value;
        let v2 = tf_hom(&f, &m, &s, &(&xi * lambda), &opts).unwrap().value;
        prop_assert!((v2 - lambda * lambda * v1).abs() <= 1e-8 * (1.0 + v2.abs()));
    }
}

#[test]
fn periodic_traces_are_flat_on_two_dimensional_manifolds() {
    let a = StepProfile::new(vec![0.5], vec![1.0, 2.0]).unwrap();
    for m in [Manifold::sphere(3).unwrap(), Manifold::circle_product(2).unwrap()] {
        let f = Integrand::area_laminate(a.clone(), 2, m.ambient_dim).unwrap();
        let s = m.project(&DVector::from_fn(m.ambient_dim, |i, _| 0.3 + 0.2 * i as f64)).unwrap();
        let c = DMatrix::from_row_slice(m.intrinsic_dim, 2, &[1.0, -0.5, 0.25, 2.0][..2 * m.intrinsic_dim]);
        let xi = m.tangent_basis(&s).unwrap() * c;
        let opts = TfHomOptions { t_list: vec![1, 2, 4], n: 4, tol_grad: 1e-10, ..Default::default() };
        let r = tf_hom(&f, &m, &s, &xi, &opts).unwrap();
        let first = r.trace[0].value;
        for p in &r.trace {
            assert!((p.value - first).abs() <= 1e-7 * (1.0 + first), "{:?}", r.trace);
        }
    }
}
