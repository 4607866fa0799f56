//! Recovery of `Q = 1 − 1/c` from the quartic functional.
//!
//! Interior points use stationary-phase probes `e^{iτΦ}`, `Φ = (z − P)²`,
//! on charts where the metric is `γ (dx² + dy²)`. With
//! `v = [e^{iτΦ}, e^{iτΦ}, e^{iτΦ̄}, e^{iτΦ̄}]` the functional behaves like
//! `−2πτ Q(P)/γ(P) + O(1)`, so an affine fit in `τ` exposes `Q(P)`.
//!
//! Boundary points use oscillating traces `e^{iNx¹} η(N^α x¹)` whose
//! harmonic extensions concentrate in a boundary layer of depth `1/N`;
//! the functional scales like `N^{3−k−α}` when `Q` vanishes to order `k`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{BoundaryData, ScalarField};
use crate::forward::solve_laplace_beltrami;
use crate::geometry::Space;
use crate::identity::{dn_difference_functional, q_functional, Coefficient, DnPath};
use crate::mesh::{Mesh, Point};
use crate::metric::ScalarFunction;
use crate::forward::SolveOptions;

/// `Φ(z) = (z − P)²`.
pub fn phase(p: Point, center: Point) -> Complex64 {
    let z = Complex64::new(p[0] - center[0], p[1] - center[1]);
    z * z
}

/// How probe fields are realized on the mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    /// Nodal values of the closed-form holomorphic functions.
    Analytic,
    /// Discrete harmonic extensions of their boundary traces.
    Harmonic,
}

/// Where the probe functional comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// `q_functional` with the synthesizing `Q`.
    Synthetic,
    /// Differences of boundary-side identity terms under `g` and `c·g`.
    DnDifference { path: DnPath },
}

#[derive(Debug, Clone)]
pub struct InteriorProbe {
    pub center: Point,
    pub tau: f64,
    /// `[e^{iτΦ}, e^{iτΦ}, e^{iτΦ̄}, e^{iτΦ̄}]`.
    pub fields: [ScalarField<Complex64>; 4],
}

/// Points per local wavelength required of every probe.
pub const POINTS_PER_WAVELENGTH: f64 = 10.0;

/// Largest mesh size that resolves `e^{iτΦ}` out to distance `radius` from the center.
pub fn required_mesh_size(tau: f64, radius: f64) -> f64 {
    if tau == 0.0 || radius == 0.0 {
        return f64::INFINITY;
    }
    2.0 * PI / (2.0 * tau * radius) / POINTS_PER_WAVELENGTH
}

fn check_conformally_flat(space: &Space, p: Point) -> Result<f64> {
    space.metric().isothermal_factor(p)
}

fn probe_values(mesh: &Mesh, center: Point, tau: f64) -> (Vec<Complex64>, Vec<Complex64>) {
    let i = Complex64::new(0.0, 1.0);
    mesh.vertices()
        .iter()
        .map(|&p| {
            let phi = phase(p, center);
            ((i * tau * phi).exp(), (i * tau * phi.conj()).exp())
        })
        .unzip()
}

fn interior_margin(mesh: &Mesh, center: Point) -> f64 {
    mesh.boundary_vertices()
        .iter()
        .map(|&v| {
            let q = mesh.vertices()[v];
            ((q[0] - center[0]).powi(2) + (q[1] - center[1]).powi(2)).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Builds the four probe fields, checking the chart, the margin to the
/// boundary and the resolution out to `radius` from the center.
pub fn make_probe(space: &Space, center: Point, tau: f64, kind: ProbeKind, radius: f64) -> Result<InteriorProbe> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("tau must be non-negative, got {tau}")));
    }
    check_conformally_flat(space, center)?;
    let mesh = space.mesh();
    if mesh.locate(center).is_none() {
        return Err(Error::InvalidArgument(format!("probe center ({}, {}) lies outside the mesh", center[0], center[1])));
    }
    let required = required_mesh_size(tau, radius);
    let actual = mesh.mesh_size();
    if actual > required {
        return Err(Error::Resolution { required, actual });
    }
    let (hol, anti) = probe_values(mesh, center, tau);
    let (hol, anti) = match kind {
        ProbeKind::Analytic => (hol, anti),
        ProbeKind::Harmonic => {
            let ext = |vals: &[Complex64]| -> Result<Vec<Complex64>> {
                let f = ScalarField::from_vec_unchecked(vals.to_vec()).boundary_trace(mesh);
                Ok(solve_laplace_beltrami(space, &f)?.into_values())
            };
            (ext(&hol)?, ext(&anti)?)
        }
    };
    let a = ScalarField::new(mesh, hol)?;
    let b = ScalarField::new(mesh, anti)?;
    Ok(InteriorProbe {
        center,
        tau,
        fields: [a.clone(), a, b.clone(), b],
    })
}

/// Discrete harmonic probe resolved over the whole mesh.
pub fn make_interior_probe(space: &Space, center: Point, tau: f64) -> Result<InteriorProbe> {
    let radius = space
        .mesh()
        .vertices()
        .iter()
        .map(|q| ((q[0] - center[0]).powi(2) + (q[1] - center[1]).powi(2)).sqrt())
        .fold(0.0, f64::max);
    make_probe(space, center, tau, ProbeKind::Harmonic, radius)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryOptions {
    pub tau_sweep: Vec<f64>,
    pub probe: ProbeKind,
    pub source: DataSource,
    /// The center must be at least `margin_factor / √τ_min` from the boundary.
    pub margin_factor: f64,
    /// Fit residual (RMS) allowed, relative to the leading term `|A| τ_max`.
    pub max_fit_residual: f64,
    pub solve: SolveOptions,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self {
            tau_sweep: vec![20.0, 30.0, 45.0, 70.0],
            probe: ProbeKind::Analytic,
            source: DataSource::Synthetic,
            margin_factor: 2.0,
            max_fit_residual: 0.2,
            solve: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub point: Point,
    /// Estimated `Q(P)`, or the fitted exponent for boundary probes.
    pub estimate: f64,
    pub sweep: Vec<f64>,
    pub values: Vec<Complex64>,
    /// Slope and intercept of the fit (affine in τ, or log-log in N).
    pub slope: f64,
    pub intercept: f64,
    /// RMS fit residual relative to the leading term.
    pub fit_residual: f64,
    /// `|B| / (|A| τ_max)` for interior fits.
    pub intercept_ratio: f64,
    pub reliable: bool,
}

/// Least-squares line `y ≈ a x + b`; returns `(a, b, rms residual)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let b = my - a * mx;
    let rms = (x.iter().zip(y).map(|(u, v)| (v - a * u - b).powi(2)).sum::<f64>() / n).sqrt();
    (a, b, rms)
}

/// Radius of the set where `Q` is nonzero, seen from `center`.
fn support_radius(space: &Space, q: &Coefficient, center: Point) -> f64 {
    let mut r: f64 = 0.0;
    for (t, tg) in space.triangles().iter().enumerate() {
        if tg.quad.iter().any(|qp| q.at(space, t, qp) != 0.0) {
            for &v in &tg.vertices {
                let p = space.mesh().vertices()[v];
                r = r.max(((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt());
            }
        }
    }
    r
}

/// The probe functional at one `τ`.
pub fn probe_functional(
    space: &Space,
    c: &ScalarFunction,
    center: Point,
    tau: f64,
    opts: &RecoveryOptions,
) -> Result<Complex64> {
    let q = Coefficient::from_conformal_factor(c);
    match opts.source {
        DataSource::Synthetic => {
            let radius = match opts.probe {
                ProbeKind::Analytic => support_radius(space, &q, center),
                ProbeKind::Harmonic => support_radius(space, &Coefficient::Function(ScalarFunction::constant(1.0)), center),
            };
            let probe = make_probe(space, center, tau, opts.probe, radius)?;
            let [a, b, c2, d] = &probe.fields;
            q_functional(space, &q, [a, b, c2, d])
        }
        DataSource::DnDifference { path } => {
            let radius = support_radius(space, &Coefficient::Function(ScalarFunction::constant(1.0)), center);
            let probe = make_probe(space, center, tau, ProbeKind::Harmonic, radius)?;
            let tr: Vec<BoundaryData<Complex64>> = probe.fields.iter().map(|f| f.boundary_trace(space.mesh())).collect();
            dn_difference_functional(space, c, [&tr[0], &tr[1], &tr[2], &tr[3]], path, &opts.solve)
        }
    }
}

/// Stationary-phase estimate of `Q(P)` from an affine fit over the τ sweep.
pub fn recover_q_point(space: &Space, c: &ScalarFunction, center: Point, opts: &RecoveryOptions) -> Result<RecoveryResult> {
    if opts.tau_sweep.len() < 2 {
        return Err(Error::InvalidArgument("tau sweep needs at least two values".into()));
    }
    let gamma = check_conformally_flat(space, center)?;
    let tau_min = opts.tau_sweep.iter().cloned().fold(f64::INFINITY, f64::min);
    let tau_max = opts.tau_sweep.iter().cloned().fold(0.0, f64::max);
    let margin = interior_margin(space.mesh(), center);
    if margin < opts.margin_factor / tau_min.sqrt() {
        return Err(Error::InvalidArgument(format!(
            "probe center ({}, {}) is {margin:.3} from the boundary, below {:.3}",
            center[0],
            center[1],
            opts.margin_factor / tau_min.sqrt()
        )));
    }
    let values = space
        .exec()
        .try_map(&opts.tau_sweep, |&tau| probe_functional(space, c, center, tau, opts))?;
    let re: Vec<f64> = values.iter().map(|v| v.re).collect();
    let (a, b, rms) = fit_line(&opts.tau_sweep, &re);
    let lead = a.abs() * tau_max;
    let fit_residual = if lead > 0.0 { rms / lead } else { 0.0 };
    let intercept_ratio = if lead > 0.0 { b.abs() / lead } else { 0.0 };
    Ok(RecoveryResult {
        point: center,
        estimate: -a * gamma / (2.0 * PI),
        sweep: opts.tau_sweep.clone(),
        values,
        slope: a,
        intercept: b,
        fit_residual,
        intercept_ratio,
        reliable: fit_residual <= opts.max_fit_residual,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveredField {
    pub points: Vec<RecoveryResult>,
    /// Nodal estimate: each vertex takes the value of the nearest reliable point.
    pub field: ScalarField,
}

/// Maps [`recover_q_point`] over `grid`; points that fail a precondition are
/// kept as unreliable entries.
pub fn recover_q_field(space: &Space, c: &ScalarFunction, grid: &[Point], opts: &RecoveryOptions) -> Result<RecoveredField> {
    let points = space.exec().map(grid, |&p| match recover_q_point(space, c, p, opts) {
        Ok(r) => Ok(r),
        Err(Error::InvalidArgument(msg)) | Err(Error::UnreliableRecovery(msg)) => {
            log::info!("point ({}, {}) skipped: {msg}", p[0], p[1]);
            Ok(RecoveryResult {
                point: p,
                estimate: f64::NAN,
                sweep: opts.tau_sweep.clone(),
                values: Vec::new(),
                slope: f64::NAN,
                intercept: f64::NAN,
                fit_residual: f64::NAN,
                intercept_ratio: f64::NAN,
                reliable: false,
            })
        }
        Err(e) => Err(e),
    });
    let points = points.into_iter().collect::<Result<Vec<_>>>()?;
    let reliable: Vec<&RecoveryResult> = points.iter().filter(|r| r.reliable).collect();
    if reliable.is_empty() {
        return Err(Error::UnreliableRecovery("no grid point gave a reliable estimate".into()));
    }
    let values = space
        .mesh()
        .vertices()
        .iter()
        .map(|p| {
            let d2 = |r: &&RecoveryResult| (r.point[0] - p[0]).powi(2) + (r.point[1] - p[1]).powi(2);
            reliable
                .iter()
                .min_by(|a, b| d2(a).total_cmp(&d2(b)))
                .map(|r| r.estimate)
                .unwrap_or(0.0)
        })
        .collect();
    Ok(RecoveredField {
        points,
        field: ScalarField::new(space.mesh(), values)?,
    })
}

/// Fraction of the probe functional retained when `Q` is cut off smoothly
/// outside distance `radius_factor / √τ` of the center.
pub fn localization_ratio(
    space: &Space,
    q: &ScalarFunction,
    center: Point,
    tau: f64,
    radius_factor: f64,
) -> Result<f64> {
    let radius = support_radius(space, &Coefficient::Function(q.clone()), center);
    let probe = make_probe(space, center, tau, ProbeKind::Analytic, radius)?;
    let [a, b, c, d] = &probe.fields;
    let full = q_functional(space, &Coefficient::Function(q.clone()), [a, b, c, d])?;
    let r0 = radius_factor / tau.sqrt();
    let qc = q.clone();
    let cut = ScalarFunction::new("cutoff", move |p| {
        let s = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt() / r0;
        qc.eval(p) * if s < 1.0 { (1.0 - s * s).powi(4) } else { 0.0 }
    });
    let local = q_functional(space, &Coefficient::Function(cut), [a, b, c, d])?;
    Ok(local.re / full.re)
}

/// Oscillating boundary probe at a point of a straight boundary segment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryProbe {
    pub point: Point,
    pub n: f64,
    pub m: u32,
    pub lambda: f64,
    pub alpha: f64,
    pub kappa: f64,
    /// Unit tangent and inward unit normal of the boundary at `point` (Euclidean).
    pub tangent: [f64; 2],
    pub inward: [f64; 2],
}

/// `∫_{-1}^{1} (1 − t²)^8 dt`, the normalization of `η = (1 − t²)⁴`.
const ETA_NORM2: f64 = 65536.0 / 109395.0;

/// Horizontal cutoff `η`, with `∫ η² = 1` and support in `(−1, 1)`.
pub fn eta(t: f64) -> f64 {
    if t.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - t * t).powi(4) / ETA_NORM2.sqrt()
    }
}

/// Vertical cutoff `ζ`: equal to 1 near 0, vanishing beyond 1.
pub fn zeta(s: f64) -> f64 {
    if s <= 0.5 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        let t = (s - 0.5) / 0.5;
        (1.0 - t * t).powi(4)
    }
}

impl BoundaryProbe {
    pub fn new(space: &Space, point: Point, n: f64, m: u32) -> Result<Self> {
        let mesh = space.mesh();
        let v = mesh.nearest_vertex(point);
        if !mesh.is_boundary(v) {
            return Err(Error::InvalidArgument(format!(
                "boundary probe point ({}, {}) is not a boundary vertex",
                point[0], point[1]
            )));
        }
        let g = space.metric_eval(point)?;
        if !space.metric().is_isothermal_at(point) {
            return Err(Error::InvalidArgument("boundary probes need an isothermal metric".into()));
        }
        let b = space.boundary()?;
        let k = mesh.boundary_position(v).expect("boundary vertex");
        let nu = b.normal[k];
        let nl = (nu[0] * nu[0] + nu[1] * nu[1]).sqrt();
        let inward = [-nu[0] / nl, -nu[1] / nl];
        let tangent = [-inward[1], inward[0]];
        let mm = (m * m) as f64;
        let lambda = 1.0 / (mm + m as f64 + 1.0);
        let alpha = (mm + 1.0) / (mm + m as f64 + 1.0);
        Ok(Self {
            point: mesh.vertices()[v],
            n,
            m,
            lambda,
            alpha,
            kappa: g.a11.sqrt(),
            tangent,
            inward,
        })
    }

    /// Boundary normal coordinates `(x¹, x²)` of `p` for the constant metric
    /// `γ (dx² + dy²)`: the metric becomes `γ⁻¹ (dx¹)² + (dx²)²`.
    pub fn coordinates(&self, p: Point) -> [f64; 2] {
        let d = [p[0] - self.point[0], p[1] - self.point[1]];
        let g = self.kappa * self.kappa;
        let s = d[0] * self.tangent[0] + d[1] * self.tangent[1];
        let y = d[0] * self.inward[0] + d[1] * self.inward[1];
        [g * s, self.kappa * y]
    }

    /// `Ψ_N = ζ(N^{1/2} x²) e^{iNx¹} e^{−κNx²} η(N^α x¹)`.
    pub fn profile(&self, p: Point) -> Complex64 {
        let [x1, x2] = self.coordinates(p);
        let amp = zeta(self.n.sqrt() * x2) * (-self.kappa * self.n * x2).exp() * eta(self.n.powf(self.alpha) * x1);
        if amp == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::from_polar(amp, self.n * x1)
    }

    /// `u_N`: the discrete harmonic extension of `Ψ_N|∂`.
    pub fn harmonic_field(&self, space: &Space) -> Result<ScalarField<Complex64>> {
        let f = BoundaryData::from_fn(space.mesh(), |p| self.profile(p));
        solve_laplace_beltrami(space, &f)
    }
}

/// Fits `log |F(N)|` against `log N` for the functional
/// `∫ Q (2 g(∇u_N, ∇ū_N)² + |g(∇u_N, ∇u_N)|²) dV`.
pub fn boundary_jet_probe(
    space: &Space,
    q: &Coefficient,
    point: Point,
    m: u32,
    n_sweep: &[f64],
    max_fit_residual: f64,
) -> Result<RecoveryResult> {
    if n_sweep.len() < 2 {
        return Err(Error::InvalidArgument("N sweep needs at least two values".into()));
    }
    let h = space.mesh().mesh_size();
    let n_max = n_sweep.iter().cloned().fold(0.0, f64::max);
    let probe = BoundaryProbe::new(space, point, n_max, m)?;
    // wavelength in chart units along the boundary
    let required = 2.0 * PI / (n_max * probe.kappa * probe.kappa) / POINTS_PER_WAVELENGTH;
    if h > required {
        return Err(Error::Resolution { required, actual: h });
    }
    let values = space.exec().try_map(n_sweep, |&n| {
        let probe = BoundaryProbe::new(space, point, n, m)?;
        let u = probe.harmonic_field(space)?;
        let ub = ScalarField::from_vec_unchecked(u.values().iter().map(|v| v.conj()).collect());
        q_functional(space, q, [&u, &u, &ub, &ub])
    })?;
    let lx: Vec<f64> = n_sweep.iter().map(|n| n.ln()).collect();
    let ly: Vec<f64> = values.iter().map(|v| v.norm().ln()).collect();
    if ly.iter().any(|v| !v.is_finite()) {
        return Ok(RecoveryResult {
            point: probe.point,
            estimate: f64::NAN,
            sweep: n_sweep.to_vec(),
            values,
            slope: f64::NAN,
            intercept: f64::NAN,
            fit_residual: f64::NAN,
            intercept_ratio: f64::NAN,
            reliable: false,
        });
    }
    let (a, b, rms) = fit_line(&lx, &ly);
    Ok(RecoveryResult {
        point: probe.point,
        estimate: a,
        sweep: n_sweep.to_vec(),
        values,
        slope: a,
        intercept: b,
        fit_residual: rms,
        intercept_ratio: f64::NAN,
        reliable: rms <= max_fit_residual,
    })
}

/// `3 − k − α` for jet order `m`.
pub fn expected_exponent(k: u32, m: u32) -> f64 {
    let mm = (m * m) as f64;
    3.0 - k as f64 - (mm + 1.0) / (mm + m as f64 + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_is_normalized() {
        let n = 20000;
        let s: f64 = (0..n)
            .map(|i| {
                let t = -1.0 + 2.0 * (i as f64 + 0.5) / n as f64;
                eta(t).powi(2) * 2.0 / n as f64
            })
            .sum();
        assert!((s - 1.0).abs() < 1e-8);
    }

    #[test]
    fn exponents_for_m2() {
        assert!((expected_exponent(0, 2) - (3.0 - 5.0 / 7.0)).abs() < 1e-15);
        assert!((expected_exponent(1, 2) - (2.0 - 5.0 / 7.0)).abs() < 1e-15);
    }

    #[test]
    fn line_fit_is_exact_on_lines() {
        let (a, b, r) = fit_line(&[1.0, 2.0, 4.0], &[3.0, 5.0, 9.0]);
        assert!((a - 2.0).abs() < 1e-14 && (b - 1.0).abs() < 1e-14 && r < 1e-14);
    }
}
