use std::sync::Arc;

use minsurf::inverse::{
    localization_ratio, make_probe, recover_q_point, required_mesh_size, BoundaryProbe, ProbeKind, RecoveryOptions,
};
use minsurf::{Error, Mesh, MetricField, ScalarFunction, Space};

fn disc(n: usize) -> Space {
    Space::new(Arc::new(Mesh::disc(n, (2.0 * std::f64::consts::PI * n as f64).round() as usize).unwrap()), MetricField::flat()).unwrap()
}

#[test]
fn analytic_probe_is_close_to_its_harmonic_extension() {
    let s = disc(40);
    let a = make_probe(&s, [0.0, 0.0], 5.0, ProbeKind::Analytic, 1.0).unwrap();
    let h = make_probe(&s, [0.0, 0.0], 5.0, ProbeKind::Harmonic, 1.0).unwrap();
    let d = a.fields[0]
        .values()
        .iter()
        .zip(h.fields[0].values())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max);
    assert!(d < 2e-3 * a.fields[0].max_abs(), "{d}");
}

#[test]
fn under_resolved_probe_is_rejected() {
    let s = disc(8);
    match make_probe(&s, [0.0, 0.0], 50.0, ProbeKind::Analytic, 1.0) {
        Err(Error::Resolution { required, actual }) => {
            assert!((required - required_mesh_size(50.0, 1.0)).abs() < 1e-15 && actual > required)
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn probe_near_the_boundary_is_rejected() {
    let s = disc(60);
    let c = ScalarFunction::constant(1.0);
    let r = recover_q_point(&s, &c, [0.95, 0.0], &RecoveryOptions::default());
    assert!(matches!(r, Err(Error::InvalidArgument(_))));
}

#[test]
fn probe_functional_localizes_at_the_center() {
    let s = disc(170);
    let q = ScalarFunction::new("q", |p| {
        let r2 = (p[0] * p[0] + p[1] * p[1]) / 0.25;
        if r2 < 1.0 { 0.1 * (1.0 - r2).powi(4) } else { 0.0 }
    });
    let r: Vec<f64> = [15.0, 30.0, 60.0]
        .iter()
        .map(|&tau| localization_ratio(&s, &q, [0.0, 0.0], tau, 4.0).unwrap())
        .collect();
    assert!(r.windows(2).all(|w| w[1] > w[0]) && r[2] > 0.9 && r[2] <= 1.0, "{r:?}");
}

#[test]
fn boundary_probe_decays_into_the_interior() {
    let s = Space::new(Arc::new(Mesh::rectangle(-0.3, 0.3, 0.0, 0.3, 60, 30).unwrap()), MetricField::flat()).unwrap();
    let p = BoundaryProbe::new(&s, [0.0, 0.0], 40.0, 2).unwrap();
    assert_eq!(p.inward, [0.0, 1.0]);
    let at = |y: f64| p.profile([0.0, y]).norm();
    assert!((at(0.0) - minsurf::inverse::eta(0.0)).abs() < 1e-12);
    for y in [0.01, 0.03, 0.05] {
        assert!((at(y) / at(0.0) - (-40.0 * y).exp()).abs() < 1e-12);
    }
    assert_eq!(at(0.2), 0.0);
    let u = p.harmonic_field(&s).unwrap();
    let top = s.mesh().nearest_vertex([0.0, 0.3]);
    assert!(u.values()[top].norm() < 1e-3 * u.max_abs());
}

#[test]
fn boundary_probe_needs_a_boundary_point() {
    let s = disc(10);
    assert!(BoundaryProbe::new(&s, [0.0, 0.0], 10.0, 2).is_err());
    let ok = BoundaryProbe::new(&s, [1.0, 0.0], 10.0, 2).unwrap();
    assert!((ok.inward[0] + 1.0).abs() < 1e-2);
}
