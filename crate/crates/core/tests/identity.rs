use std::sync::Arc;

use minsurf::forward::{solve_laplace_beltrami, SolveOptions};
use minsurf::identity::{
    conformal_partner, dn_difference_functional, integral_identity_check, q_functional, volume_term, Coefficient, DnPath,
};
use minsurf::linearize::third_linearization_source;
use minsurf::{BoundaryData, Error, Mesh, MetricField, ScalarField, ScalarFunction, Space};
use proptest::prelude::*;

fn disc(n: usize) -> Space {
    Space::new(Arc::new(Mesh::disc(n, (2.0 * std::f64::consts::PI * n as f64).round() as usize).unwrap()), MetricField::flat()).unwrap()
}

fn bump_c(amp: f64) -> ScalarFunction {
    ScalarFunction::new("c", move |p| {
        let r2 = (p[0] * p[0] + p[1] * p[1]) / 0.25;
        1.0 + if r2 < 1.0 { amp * (1.0 - r2).powi(4) } else { 0.0 }
    })
}

fn harmonic(s: &Space, f: impl Fn([f64; 2]) -> f64) -> ScalarField {
    solve_laplace_beltrami(s, &BoundaryData::from_fn(s.mesh(), f)).unwrap()
}

#[test]
fn identity_residual_is_small_and_shrinks() {
    let f = [|p: [f64; 2]| p[0], |p: [f64; 2]| p[1]];
    let mut prev = f64::INFINITY;
    for n in [8, 16] {
        let s = disc(n);
        let d: Vec<BoundaryData> = f.iter().map(|g| BoundaryData::from_fn(s.mesh(), g)).collect();
        let r = integral_identity_check(&s, [&d[0], &d[0], &d[1], &d[1]], DnPath::Exact, &SolveOptions::default()).unwrap();
        assert!(r.relative_residual < 1e-3 && r.relative_residual < prev / 3.0, "{r:?}");
        prev = r.relative_residual;
    }
}

#[test]
fn conformal_pair_volume_difference_is_the_q_functional() {
    let s = disc(10);
    let c = bump_c(0.3);
    let partner = conformal_partner(&s, &c).unwrap();
    let v = [harmonic(&s, |p| p[0]), harmonic(&s, |p| p[0] * p[0] - p[1] * p[1]), harmonic(&s, |p| p[1]), harmonic(&s, |p| p[0] * p[1])];
    let r = [&v[0], &v[1], &v[2], &v[3]];
    let diff = volume_term(&s, r).unwrap() - volume_term(&partner, r).unwrap();
    let q = q_functional(&s, &Coefficient::from_conformal_factor(&c), r).unwrap();
    assert!((diff - q).abs() <= 1e-12 * q.abs().max(1.0), "{diff} vs {q}");
}

#[test]
fn dn_difference_reproduces_the_q_functional() {
    let s = disc(16);
    let c = bump_c(0.2);
    let d = [BoundaryData::from_fn(s.mesh(), |p| p[0]), BoundaryData::from_fn(s.mesh(), |p| p[1])];
    let f = [&d[0], &d[0], &d[1], &d[1]];
    let v: Vec<ScalarField> = f.iter().map(|x| solve_laplace_beltrami(&s, x).unwrap()).collect();
    let q = q_functional(&s, &Coefficient::from_conformal_factor(&c), [&v[0], &v[1], &v[2], &v[3]]).unwrap();
    let exact = dn_difference_functional(&s, &c, f, DnPath::Exact, &SolveOptions::default()).unwrap();
    assert!((exact - q).abs() < 1e-5 * q.abs(), "{exact} vs {q}");
}

#[test]
fn conformal_partner_checks_the_factor() {
    let s = disc(4);
    let neg = ScalarFunction::new("neg", |p| if p[0].abs() < 0.3 { -1.0 } else { 1.0 });
    assert!(matches!(conformal_partner(&s, &neg), Err(Error::InvalidConformalFactor { .. })));
    let edge = ScalarFunction::constant(2.0);
    assert!(matches!(conformal_partner(&s, &edge), Err(Error::InvalidArgument(_))));
}

#[test]
fn holomorphic_fields_annihilate_the_quartic_density() {
    let s = disc(6);
    let z = ScalarField::from_fn(s.mesh(), |p| minsurf::Complex64::new(p[0], p[1]));
    let one = Coefficient::Function(ScalarFunction::constant(1.0));
    let v = q_functional(&s, &one, [&z, &z, &z, &z]).unwrap();
    assert!(v.norm() < 1e-13);
    let zb = ScalarField::from_fn(s.mesh(), |p| minsurf::Complex64::new(p[0], -p[1]));
    let w = q_functional(&s, &one, [&z, &z, &zb, &zb]).unwrap();
    assert!(w.norm() > 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn q_functional_is_symmetric_in_the_cubic_slots(perm in 0usize..6, amp in 0.05..0.5f64) {
        let s = disc(5);
        let v = [harmonic(&s, |p| p[0]), harmonic(&s, |p| p[1] * p[0]), harmonic(&s, |p| p[0] * p[0] - p[1] * p[1]), harmonic(&s, |p| p[1])];
        let q = Coefficient::from_conformal_factor(&bump_c(amp));
        let base = q_functional(&s, &q, [&v[0], &v[1], &v[2], &v[3]]).unwrap();
        let p = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]][perm];
        let other = q_functional(&s, &q, [&v[p[0]], &v[p[1]], &v[p[2]], &v[3]]).unwrap();
        prop_assert!((base - other).abs() <= 1e-13 * base.abs().max(1e-3));
    }

    #[test]
    fn cubic_source_is_trilinear(a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let s = disc(4);
        let x = ScalarField::from_fn(s.mesh(), |p| p[0]);
        let y = ScalarField::from_fn(s.mesh(), |p| p[1] * p[1]);
        let z = ScalarField::from_fn(s.mesh(), |p| p[0] * p[1]);
        let mix = ScalarField::from_fn(s.mesh(), |p| a * p[0] + b * p[1] * p[1]);
        let l = third_linearization_source(&s, &mix, &z, &x).unwrap();
        let lx = third_linearization_source(&s, &x, &z, &x).unwrap();
        let ly = third_linearization_source(&s, &y, &z, &x).unwrap();
        for i in 0..l.len() {
            prop_assert!((l[i] - a * lx[i] - b * ly[i]).abs() < 1e-12);
        }
    }
}
