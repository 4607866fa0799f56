use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use minsurf::forward::SolveOptions;
use minsurf::identity::{q_functional, Coefficient};
use minsurf::inverse::{make_probe, ProbeKind};
use minsurf::linearize::third_linearization_fd;
use minsurf::{BoundaryData, Exec, Mesh, MetricField, ScalarFunction, Space};

const MODES: [Exec; 2] = [Exec::Sequential, Exec::Parallel];

fn disc(n: usize, exec: Exec) -> Space {
    let m = Mesh::disc(n, (2.0 * std::f64::consts::PI * n as f64).round() as usize).unwrap();
    let c = ScalarFunction::new("c", |p| 1.0 + 0.1 * (-(p[0] * p[0] + p[1] * p[1]) * 4.0).exp());
    Space::new(Arc::new(m), MetricField::conformal(MetricField::flat(), c))
        .unwrap()
        .with_exec(exec)
}

fn stiffness(c: &mut Criterion) {
    let mut g = c.benchmark_group("weighted_stiffness");
    for exec in MODES {
        let s = disc(80, exec);
        let w = vec![1.5; s.triangles().len()];
        g.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &s, |b, s| {
            b.iter(|| black_box(s.assemble_weighted_stiffness(&w).unwrap()))
        });
    }
    g.finish();
}

fn fd_stencil(c: &mut Criterion) {
    let mut g = c.benchmark_group("third_linearization_fd");
    g.sample_size(10);
    for exec in MODES {
        let s = disc(24, exec);
        let d: Vec<BoundaryData> = [|p: [f64; 2]| p[0], |p: [f64; 2]| p[1], |p: [f64; 2]| p[0] * p[1]]
            .iter()
            .map(|f| BoundaryData::from_fn(s.mesh(), f))
            .collect();
        let opts = SolveOptions::default();
        g.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| black_box(third_linearization_fd(&s, &d[0], &d[1], &d[2], 0.03, &opts).unwrap()))
        });
    }
    g.finish();
}

fn probe_functional(c: &mut Criterion) {
    let mut g = c.benchmark_group("q_functional");
    for exec in MODES {
        let s = disc(120, exec);
        let probe = make_probe(&s, [0.0, 0.0], 20.0, ProbeKind::Analytic, 0.5).unwrap();
        let q = Coefficient::Function(ScalarFunction::new("q", |p| 0.1 * (1.0 - p[0] * p[0] - p[1] * p[1])));
        let [a, b2, c2, d] = &probe.fields;
        g.bench_function(format!("{exec:?}"), |b| {
            b.iter(|| black_box(q_functional(&s, &q, [a, b2, c2, d]).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, stiffness, fd_stencil, probe_functional);
criterion_main!(benches);
