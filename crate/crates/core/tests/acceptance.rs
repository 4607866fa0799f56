//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the report is always shown.
//! Criteria listed in `KNOWN_FAILURES` are reported as FAIL but do not fail
//! the target; if one of them starts passing the target fails so the list
//! gets revisited.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use minsurf::dnmap::{area_first_variation, dn_from_area_data, dn_linear, dn_nonlinear, lambda_from_ng, ng_from_lambda};
use minsurf::experiments::{self, log_slope, ExperimentConfig, Subcommand};
use minsurf::forward::{solve_laplace_beltrami, solve_minimal_surface, SolveOptions};
use minsurf::identity::{conformal_partner, integral_identity_check, Coefficient, DnPath};
use minsurf::inverse::{boundary_jet_probe, expected_exponent, recover_q_point, RecoveryOptions};
use minsurf::linearize::{second_linearization_fd, third_linearization_fd, third_linearization_pde};
use minsurf::{BoundaryData, Exec, Mesh, MetricField, ScalarField, ScalarFunction, Space};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KNOWN_FAILURES: &[(&str, &str)] = &[(
    "3b",
    "the discrete solution map is odd in f, so the mixed central difference has no h^2 term \
     and only rounding (growing like 1/h^2) is left",
)];

struct Outcome {
    passed: bool,
    detail: String,
}

fn check(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

type Criterion = (&'static str, &'static str, fn() -> Vec<(&'static str, Outcome)>);

fn flat(mesh: Mesh) -> Space {
    Space::new(Arc::new(mesh), MetricField::flat()).unwrap()
}

fn disc(n: usize) -> Space {
    flat(Mesh::disc(n, experiments::standard_disc_angular(n)).unwrap())
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn re_z(p: [f64; 2]) -> f64 {
    p[0]
}
fn im_z(p: [f64; 2]) -> f64 {
    p[1]
}
fn re_z2(p: [f64; 2]) -> f64 {
    p[0] * p[0] - p[1] * p[1]
}
fn im_z2(p: [f64; 2]) -> f64 {
    2.0 * p[0] * p[1]
}

fn bump(amplitude: f64, radius: f64) -> impl Fn([f64; 2]) -> f64 + Send + Sync + Clone + 'static {
    move |p| {
        let r2 = (p[0] * p[0] + p[1] * p[1]) / (radius * radius);
        if r2 < 1.0 {
            amplitude * (1.0 - r2).powi(4)
        } else {
            0.0
        }
    }
}

fn forward_affine() -> Vec<(&'static str, Outcome)> {
    let t = Instant::now();
    let s = flat(Mesh::square(64).unwrap());
    let affine = |p: [f64; 2]| 0.05 * (p[0] + 2.0 * p[1]);
    let f = BoundaryData::from_fn(s.mesh(), affine);
    let (u, rep) = solve_minimal_surface(&s, &f, &SolveOptions::default()).unwrap();
    let err = u
        .values()
        .iter()
        .zip(s.mesh().vertices())
        .map(|(v, &p)| (v - affine(p)).abs())
        .fold(0.0, f64::max);
    let secs = t.elapsed().as_secs_f64();
    vec![(
        "1",
        check(
            rep.iterations <= 2 && err <= 1e-10 && secs < 1.0,
            format!("iterations {} <= 2, sup error {err:.2e} <= 1e-10, {secs:.2} s < 1 s", rep.iterations),
        ),
    )]
}

const CATENOID_A: f64 = 0.5;

fn catenoid(p: [f64; 2]) -> f64 {
    CATENOID_A * ((p[0] * p[0] + p[1] * p[1]).sqrt() / CATENOID_A).acosh()
}

fn forward_catenoid() -> Vec<(&'static str, Outcome)> {
    let t = Instant::now();
    let mut hs = Vec::new();
    let mut errs = Vec::new();
    let mut vertices = 0;
    for (nr, na) in [(20, 80), (40, 160), (80, 320)] {
        let s = flat(Mesh::annulus(0.55, 1.5, nr, na).unwrap());
        let f = BoundaryData::from_fn(s.mesh(), catenoid);
        let (u, _) = solve_minimal_surface(&s, &f, &SolveOptions::default()).unwrap();
        let scale = s.mesh().vertices().iter().map(|&p| catenoid(p).abs()).fold(0.0, f64::max);
        let err = u
            .values()
            .iter()
            .zip(s.mesh().vertices())
            .map(|(v, &p)| (v - catenoid(p)).abs())
            .fold(0.0, f64::max);
        hs.push(s.mesh().mesh_size());
        errs.push(err / scale);
        vertices = s.mesh().num_vertices();
    }
    let order = log_slope(&hs, &errs);
    let secs = t.elapsed().as_secs_f64();
    let rel = errs[2];
    vec![(
        "2",
        check(
            rel <= 1e-3 && order >= 1.8 && secs < 30.0 && (10_000..=40_000).contains(&vertices),
            format!("relative sup error {rel:.2e} <= 1e-3 at {vertices} vertices, order {order:.2} >= 1.8, {secs:.2} s < 30 s"),
        ),
    )]
}

fn second_linearization() -> Vec<(&'static str, Outcome)> {
    let s = disc(16);
    let opts = SolveOptions::default();
    let steps = [1e-1, 10f64.powf(-1.5), 1e-2];
    let mut final_ok = true;
    let mut decay_ok = true;
    let mut detail_a = Vec::new();
    let mut detail_b = Vec::new();
    for (fj, fk) in [(re_z as fn([f64; 2]) -> f64, im_z as fn([f64; 2]) -> f64), (re_z2, re_z)] {
        let (dj, dk) = (BoundaryData::from_fn(s.mesh(), fj), BoundaryData::from_fn(s.mesh(), fk));
        let scale = dj.max_abs().max(dk.max_abs());
        let sups: Vec<f64> = steps
            .iter()
            .map(|&h| second_linearization_fd(&s, &dj, &dk, h, &opts).unwrap().max_abs())
            .collect();
        let slope = log_slope(&steps, &sups);
        let decreasing = sups.windows(2).all(|w| w[1] < w[0]);
        final_ok &= sups[2] <= 1e-4 * scale;
        decay_ok &= decreasing && slope >= 1.8;
        detail_a.push(format!("{:.1e}", sups[2] / scale));
        detail_b.push(format!(
            "[{}] slope {slope:.2}",
            sups.iter().map(|v| format!("{v:.1e}")).collect::<Vec<_>>().join(", ")
        ));
    }
    vec![
        ("3a", check(final_ok, format!("final sup/|f| {} <= 1e-4", detail_a.join(", ")))),
        (
            "3b",
            check(decay_ok, format!("sup over h = 1e-1, 1e-1.5, 1e-2: {}; need decreasing, slope >= 1.8", detail_b.join("; "))),
        ),
    ]
}

fn third_linearization() -> Vec<(&'static str, Outcome)> {
    let s = disc(16);
    let opts = SolveOptions::default();
    let fs: [fn([f64; 2]) -> f64; 4] = [re_z, im_z, re_z2, im_z2];
    let data: Vec<BoundaryData> = fs.iter().map(|f| BoundaryData::from_fn(s.mesh(), f)).collect();
    let v: Vec<ScalarField> = data.iter().map(|f| solve_laplace_beltrami(&s, f).unwrap()).collect();
    let h = 10f64.powf(-1.5);
    let mut worst: f64 = 0.0;
    for [j, k, l] in [[0, 1, 2], [2, 2, 0], [0, 2, 3]] {
        let pde = third_linearization_pde(&s, &v[j], &v[k], &v[l]).unwrap();
        let fd = third_linearization_fd(&s, &data[j], &data[k], &data[l], h, &opts).unwrap();
        worst = worst.max(sup_diff(pde.values(), fd.values()) / pde.max_abs());
    }
    let a = third_linearization_pde(&s, &v[0], &v[1], &v[2]).unwrap();
    let b = third_linearization_pde(&s, &v[1], &v[2], &v[0]).unwrap();
    let c = third_linearization_pde(&s, &v[2], &v[0], &v[1]).unwrap();
    let sym = sup_diff(a.values(), b.values()).max(sup_diff(a.values(), c.values()));
    vec![(
        "4",
        check(
            worst <= 0.05 && sym <= 1e-12,
            format!("worst relative PDE vs FD over 3 triples {worst:.2e} <= 0.05, permutation defect {sym:.1e} <= 1e-12"),
        ),
    )]
}

fn integral_identity() -> Vec<(&'static str, Outcome)> {
    let t = Instant::now();
    let opts = SolveOptions::default();
    let mut details = Vec::new();
    let mut ok = true;
    for quad in [[0usize, 0, 1, 1], [0, 2, 2, 0]] {
        let mut hs = Vec::new();
        let mut rs = Vec::new();
        for n in [16, 32, 64] {
            let s = disc(n);
            let fs: [fn([f64; 2]) -> f64; 3] = [re_z, im_z, re_z2];
            let d: Vec<BoundaryData> = quad.iter().map(|&i| BoundaryData::from_fn(s.mesh(), fs[i])).collect();
            let r = integral_identity_check(&s, [&d[0], &d[1], &d[2], &d[3]], DnPath::Fd { h: 0.01 }, &opts).unwrap();
            hs.push(r.mesh_size);
            rs.push(r.relative_residual);
        }
        let order = log_slope(&hs, &rs);
        ok &= rs[2] <= 1e-3 && order >= 1.0;
        details.push(format!("{quad:?}: final {:.2e}, order {order:.2}", rs[2]));
    }
    let secs = t.elapsed().as_secs_f64();
    vec![(
        "5",
        check(
            ok && secs < 300.0,
            format!("{} (need <= 1e-3, >= 1), {secs:.1} s < 300 s", details.join("; ")),
        ),
    )]
}

fn conformal_invariance() -> Vec<(&'static str, Outcome)> {
    let s = disc(16);
    let b = bump(0.2, 0.5);
    let c = ScalarFunction::new("1 + 0.2 bump", move |p| 1.0 + b(p));
    let partner = conformal_partner(&s, &c).unwrap();
    let f = BoundaryData::from_fn(s.mesh(), |p| (2.0 * p[0]).sin() + p[1] * p[1] + 0.3 * p[0] * p[1]);
    let a = dn_linear(&s, &f).unwrap();
    let b = dn_linear(&partner, &f).unwrap();
    let d = sup_diff(a.values.values(), b.values.values());
    vec![("6", check(d <= 1e-10, format!("sup |Lambda_g - Lambda_cg| {d:.2e} <= 1e-10")))]
}

fn area_pipeline() -> Vec<(&'static str, Outcome)> {
    let s = disc(12);
    let opts = SolveOptions::default();
    let h = BoundaryData::from_fn(s.mesh(), |p| 0.05 * ((2.0 * p[0]).sin() + p[0] * p[1] + 0.5 * p[1]));
    let direct = dn_nonlinear(&s, &h, &opts).unwrap();
    let pipe = dn_from_area_data(&s, &h, 1e-4, &opts).unwrap();
    let rel = sup_diff(direct.values.values(), pipe.trace.values()) / direct.values.max_abs();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut trip: f64 = 0.0;
    for _ in 0..10_000 {
        let lambda: f64 = rng.random_range(-5.0..5.0);
        let tau2: f64 = rng.random_range(0.0..4.0);
        let back = lambda_from_ng(ng_from_lambda(lambda, tau2), tau2).unwrap();
        trip = trip.max((back - lambda).abs() / lambda.abs().max(1.0));
    }
    vec![(
        "7",
        check(
            rel <= 1e-3 && trip <= 1e-14,
            format!("relative sup difference {rel:.2e} <= 1e-3, inversion round trip {trip:.1e} <= 1e-14"),
        ),
    )]
}

fn first_variation() -> Vec<(&'static str, Outcome)> {
    let s = flat(Mesh::annulus(0.55, 1.5, 40, 160).unwrap());
    let opts = SolveOptions::default();
    let f = BoundaryData::from_fn(s.mesh(), catenoid);
    let (u, _) = solve_minimal_surface(&s, &f, &opts).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let vals: Vec<f64> = (0..s.mesh().num_vertices())
            .map(|i| if s.mesh().is_boundary(i) { 0.0 } else { rng.random_range(-1.0..1.0) })
            .collect();
        let norm = vals.iter().map(|x| x * x).sum::<f64>().sqrt();
        let v = ScalarField::new(s.mesh(), vals).unwrap();
        let dv = area_first_variation(&s, &u, &v).unwrap();
        worst = worst.max(dv.abs() / (opts.newton_tol * norm));
    }
    vec![(
        "8",
        check(worst <= 10.0, format!("max |dA(u)[v]| / (tol |v|) over 5 random v = {worst:.2e} <= 10")),
    )]
}

fn interior_recovery() -> Vec<(&'static str, Outcome)> {
    let t = Instant::now();
    let s = disc(200);
    let q = bump(0.1, 0.5);
    let c = ScalarFunction::new("1/(1 - 0.1 bump)", move |p| 1.0 / (1.0 - q(p)));
    let opts = RecoveryOptions::default();
    let r = recover_q_point(&s, &c, [0.0, 0.0], &opts).unwrap();
    let control = recover_q_point(&s, &ScalarFunction::constant(1.0), [0.0, 0.0], &opts).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let rel = (r.estimate - 0.1).abs() / 0.1;
    vec![(
        "9",
        check(
            rel <= 0.2 && control.estimate.abs() <= 0.002 && r.reliable && secs < 120.0,
            format!(
                "Q_hat {:.4} vs 0.1 (rel {rel:.2} <= 0.2), control {:.1e} <= 2e-3, fit residual {:.1e} <= {} , intercept ratio {:.2}, {secs:.1} s < 120 s",
                r.estimate, control.estimate, r.fit_residual, opts.max_fit_residual, r.intercept_ratio
            ),
        ),
    )]
}

fn boundary_jet() -> Vec<(&'static str, Outcome)> {
    let s = flat(Mesh::rectangle(-0.3, 0.3, 0.0, 0.3, 480, 240).unwrap());
    let sweep = [20.0, 40.0, 80.0, 160.0];
    let g = |p: [f64; 2]| (-(p[0] * p[0] + p[1] * p[1]) / 0.5).exp();
    let q0 = Coefficient::Function(ScalarFunction::new("k0", move |p| 0.1 * g(p)));
    let q1 = Coefficient::Function(ScalarFunction::new("k1", move |p| p[1] * g(p)));
    let e0 = boundary_jet_probe(&s, &q0, [0.0, 0.0], 2, &sweep, 0.2).unwrap().slope;
    let e1 = boundary_jet_probe(&s, &q1, [0.0, 0.0], 2, &sweep, 0.2).unwrap().slope;
    let (x0, x1) = (expected_exponent(0, 2), expected_exponent(1, 2));
    vec![(
        "10",
        check(
            (e0 - x0).abs() <= 0.3 && (e1 - x1).abs() <= 0.3 && (e0 - e1).abs() >= 0.5,
            format!(
                "k=0: {e0:.3} vs {x0:.3}, k=1: {e1:.3} vs {x1:.3} (within 0.3), separation {:.3} >= 0.5",
                (e0 - e1).abs()
            ),
        ),
    )]
}

fn determinism() -> Vec<(&'static str, Outcome)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let runs = [
        (Subcommand::Forward, "forward_catenoid.json"),
        (Subcommand::LinearizeCheck, "linearize.json"),
        (Subcommand::IdentityCheck, "identity.json"),
        (Subcommand::AreaPipeline, "area.json"),
        (Subcommand::RecoverQ, "recover_q.json"),
        (Subcommand::BoundaryJet, "boundary_jet.json"),
    ];
    let mut bad = Vec::new();
    for (sub, file) in runs {
        let cfg = ExperimentConfig::load(&dir.join(file)).unwrap();
        let mut seq = cfg.clone();
        seq.exec = Exec::Sequential;
        let outs: Vec<Vec<(String, Vec<u8>)>> = [&cfg, &cfg, &seq]
            .iter()
            .map(|c| {
                let o = experiments::run(sub, c).unwrap();
                o.tables.iter().map(|t| (t.name.clone(), t.to_csv().unwrap())).collect()
            })
            .collect();
        if outs[0] != outs[1] || outs[0] != outs[2] {
            bad.push(sub.as_str());
        }
    }
    vec![(
        "11",
        check(
            bad.is_empty(),
            format!("6 subcommands run twice plus once sequentially, CSV mismatches: {bad:?}"),
        ),
    )]
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("1", "forward exactness (flat, affine)", forward_affine),
        ("2", "forward accuracy (catenoid)", forward_catenoid),
        ("3", "vanishing second linearization", second_linearization),
        ("4", "third linearization PDE vs FD", third_linearization),
        ("5", "integral identity", integral_identity),
        ("6", "conformal invariance of linear DN", conformal_invariance),
        ("7", "area pipeline", area_pipeline),
        ("8", "first-variation criticality", first_variation),
        ("9", "interior Q recovery", interior_recovery),
        ("10", "boundary jet exponent", boundary_jet),
        ("11", "determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut unexpected = Vec::new();
    let (mut pass, mut fail) = (0, 0);
    for (id, title, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        let t = Instant::now();
        let results = match std::panic::catch_unwind(run) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                vec![(id, check(false, format!("panicked: {msg}")))]
            }
        };
        for (sub, o) in results {
            let known = KNOWN_FAILURES.iter().find(|(k, _)| *k == sub).map(|(_, why)| *why);
            let tag = if o.passed { "PASS" } else { "FAIL" };
            println!("{tag} [{sub:>3}] {title}: {} ({:.1} s)", o.detail, t.elapsed().as_secs_f64());
            match (o.passed, known) {
                (true, None) => pass += 1,
                (false, Some(why)) => {
                    fail += 1;
                    println!("           known failure: {why}");
                }
                (false, None) => {
                    fail += 1;
                    unexpected.push(sub.to_string());
                }
                (true, Some(_)) => {
                    pass += 1;
                    unexpected.push(format!("{sub} (listed as a known failure but passed)"));
                }
            }
        }
    }
    println!("acceptance: {pass} passed, {fail} failed");
    if !unexpected.is_empty() {
        println!("unexpected outcomes: {}", unexpected.join(", "));
        std::process::exit(1);
    }
}
