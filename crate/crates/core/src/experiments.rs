//! Config-driven experiment runs behind the `minsurf` binary.
//!
//! A run reads one JSON config, executes a subcommand, and writes
//! `manifest.json` plus one or more CSV files into the output directory.
//! Column layouts are listed in `docs/experiments.md`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dnmap::{area_first_variation, dn_from_area_data, dn_nonlinear, lambda_from_ng, ng_from_lambda};
use crate::error::{Error, Result};
use crate::field::{BoundaryData, ScalarField};
use crate::forward::{mse_residual, solve_laplace_beltrami, solve_minimal_surface, SolveOptions};
use crate::functions::FunctionSpec;
use crate::geometry::Space;
use crate::identity::{integral_identity_check, Coefficient, DnPath};
use crate::inverse::{boundary_jet_probe, expected_exponent, recover_q_field, RecoveryOptions};
use crate::linearize::{second_linearization_fd, third_linearization_fd, third_linearization_pde};
use crate::mesh::{Mesh, Point};
use crate::metric::{MetricField, Sym2};
use crate::par::{self, Exec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Forward,
    LinearizeCheck,
    IdentityCheck,
    AreaPipeline,
    RecoverQ,
    BoundaryJet,
}

impl Subcommand {
    pub const ALL: [Subcommand; 6] = [
        Subcommand::Forward,
        Subcommand::LinearizeCheck,
        Subcommand::IdentityCheck,
        Subcommand::AreaPipeline,
        Subcommand::RecoverQ,
        Subcommand::BoundaryJet,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Subcommand::Forward => "forward",
            Subcommand::LinearizeCheck => "linearize-check",
            Subcommand::IdentityCheck => "identity-check",
            Subcommand::AreaPipeline => "area-pipeline",
            Subcommand::RecoverQ => "recover-q",
            Subcommand::BoundaryJet => "boundary-jet",
        }
    }

    /// Key of the config section the subcommand reads.
    pub fn section(self) -> &'static str {
        match self {
            Subcommand::Forward => "forward",
            Subcommand::LinearizeCheck => "linearize",
            Subcommand::IdentityCheck => "identity",
            Subcommand::AreaPipeline => "area",
            Subcommand::RecoverQ => "recover",
            Subcommand::BoundaryJet => "boundary_jet",
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSpec {
    /// Unit square, `n × n` cells.
    Square { n: usize },
    Rectangle {
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
        nx: usize,
        ny: usize,
    },
    /// Unit disc; `n_angular` defaults to `round(2π n_radial)`, which keeps
    /// triangles close to equilateral.
    Disc {
        n_radial: usize,
        #[serde(default)]
        n_angular: Option<usize>,
    },
    Annulus {
        r0: f64,
        r1: f64,
        n_r: usize,
        n_a: usize,
        #[serde(default = "unit")]
        grading: f64,
    },
    /// JSON mesh file; relative paths are taken from the config's directory.
    File { path: PathBuf },
}

fn unit() -> f64 {
    1.0
}

/// `round(2π n)` vertices on the outer circle of an `n`-ring disc.
pub fn standard_disc_angular(n_radial: usize) -> usize {
    (2.0 * PI * n_radial as f64).round() as usize
}

impl MeshSpec {
    fn resolve(&mut self, base: &Path) {
        match self {
            MeshSpec::Disc { n_radial, n_angular } if n_angular.is_none() => {
                *n_angular = Some(standard_disc_angular(*n_radial));
            }
            MeshSpec::File { path } if path.is_relative() => *path = base.join(&*path),
            _ => {}
        }
    }

    pub fn build(&self) -> Result<Mesh> {
        match self {
            MeshSpec::Square { n } => Mesh::square(*n),
            MeshSpec::Rectangle { x0, x1, y0, y1, nx, ny } => Mesh::rectangle(*x0, *x1, *y0, *y1, *nx, *ny),
            MeshSpec::Disc { n_radial, n_angular } => {
                Mesh::disc(*n_radial, n_angular.unwrap_or_else(|| standard_disc_angular(*n_radial)))
            }
            MeshSpec::Annulus {
                r0,
                r1,
                n_r,
                n_a,
                grading,
            } => Mesh::annulus_graded(*r0, *r1, *n_r, *n_a, *grading),
            MeshSpec::File { path } => Mesh::read_json(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MetricSpec {
    #[default]
    Flat,
    Constant { g11: f64, g12: f64, g22: f64 },
    /// `factor · base`
    Conformal {
        factor: FunctionSpec,
        #[serde(default)]
        base: Box<MetricSpec>,
    },
}

impl MetricSpec {
    pub fn build(&self) -> Result<MetricField> {
        match self {
            MetricSpec::Flat => Ok(MetricField::flat()),
            MetricSpec::Constant { g11, g12, g22 } => {
                let g = Sym2::new(*g11, *g12, *g22);
                if !g.is_spd() {
                    return Err(Error::Config("metric.constant is not positive definite".into()));
                }
                Ok(MetricField::constant(g))
            }
            MetricSpec::Conformal { factor, base } => {
                factor.validate()?;
                Ok(MetricField::conformal(base.build()?, factor.to_function()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Worker threads for parallel sweeps; `null` uses every core.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub exec: Exec,
    pub mesh: MeshSpec,
    #[serde(default)]
    pub metric: MetricSpec,
    #[serde(default)]
    pub solve: SolveOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forward: Option<ForwardConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linearize: Option<LinearizeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity: Option<IdentityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<AreaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recover: Option<RecoverConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_jet: Option<BoundaryJetConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardConfig {
    pub data: FunctionSpec,
    /// Closed-form solution to measure the error against.
    #[serde(default)]
    pub exact: Option<FunctionSpec>,
    /// Refinement levels; when empty the top-level mesh is used.
    #[serde(default)]
    pub levels: Vec<MeshSpec>,
    /// Random interior-supported test functions for the first-variation check.
    #[serde(default)]
    pub first_variation_probes: usize,
    #[serde(default)]
    pub assert: ForwardAssert,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForwardAssert {
    pub max_iterations: Option<usize>,
    pub max_error: Option<f64>,
    pub max_relative_error: Option<f64>,
    pub min_order: Option<f64>,
    /// `|δA(u)[v]| ≤ factor · newton_tol · ‖v‖₂`.
    pub first_variation_factor: Option<f64>,
}

fn default_w2_steps() -> Vec<f64> {
    vec![1e-1, 10f64.powf(-1.5), 1e-2]
}

fn default_w3_step() -> f64 {
    10f64.powf(-1.5)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearizeConfig {
    /// Boundary data library; pairs and triples index into it.
    pub data: Vec<FunctionSpec>,
    #[serde(default)]
    pub pairs: Vec<[usize; 2]>,
    #[serde(default = "default_w2_steps")]
    pub w2_steps: Vec<f64>,
    #[serde(default)]
    pub triples: Vec<[usize; 3]>,
    #[serde(default = "default_w3_step")]
    pub w3_step: f64,
    #[serde(default)]
    pub assert: LinearizeAssert,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearizeAssert {
    /// Final `‖w²‖∞ / ‖f‖∞` bound.
    pub w2_max_final: Option<f64>,
    /// Least slope of `log ‖w²‖∞` against `log h`.
    pub w2_min_slope: Option<f64>,
    pub w3_max_relative: Option<f64>,
    pub w3_max_symmetry_defect: Option<f64>,
}

fn default_path() -> DnPath {
    DnPath::Exact
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityConfig {
    pub data: Vec<FunctionSpec>,
    pub quadruples: Vec<[usize; 4]>,
    pub levels: Vec<MeshSpec>,
    #[serde(default = "default_path")]
    pub path: DnPath,
    #[serde(default)]
    pub assert: IdentityAssert,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityAssert {
    pub max_final_relative: Option<f64>,
    pub min_order: Option<f64>,
}

fn default_area_step() -> f64 {
    1e-4
}

fn default_round_trip_samples() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaConfig {
    pub data: FunctionSpec,
    #[serde(default = "default_area_step")]
    pub step: f64,
    /// Random `(Λ, |τh|²)` pairs pushed through `Λ → N → Λ`.
    #[serde(default = "default_round_trip_samples")]
    pub round_trip_samples: usize,
    #[serde(default)]
    pub assert: AreaAssert,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaAssert {
    pub max_relative: Option<f64>,
    pub max_round_trip: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverConfig {
    /// The conformal factor `c`; the target is `Q = 1 − 1/c`.
    pub conformal: FunctionSpec,
    pub points: Vec<Point>,
    #[serde(default = "default_tau_sweep")]
    pub tau_sweep: Vec<f64>,
    #[serde(default)]
    pub probe: Option<crate::inverse::ProbeKind>,
    #[serde(default)]
    pub source: Option<crate::inverse::DataSource>,
    #[serde(default = "default_margin")]
    pub margin_factor: f64,
    #[serde(default = "default_fit_residual")]
    pub max_fit_residual: f64,
    #[serde(default)]
    pub assert: RecoverAssert,
}

fn default_tau_sweep() -> Vec<f64> {
    RecoveryOptions::default().tau_sweep
}

fn default_margin() -> f64 {
    RecoveryOptions::default().margin_factor
}

fn default_fit_residual() -> f64 {
    RecoveryOptions::default().max_fit_residual
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverAssert {
    /// `|Q̂ − Q| ≤ max_relative_error · |Q|` where `Q ≠ 0`.
    pub max_relative_error: Option<f64>,
    /// `|Q̂ − Q| ≤ max_abs_error` at every point.
    pub max_abs_error: Option<f64>,
    /// Every point must pass the affine-fit diagnostics.
    #[serde(default)]
    pub require_reliable: bool,
}

fn default_m() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JetProfile {
    pub label: String,
    pub q: FunctionSpec,
    /// Order of the first nonvanishing normal derivative of `q` at the point.
    pub k: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryJetConfig {
    pub point: Point,
    #[serde(default = "default_m")]
    pub m: u32,
    pub n_sweep: Vec<f64>,
    pub profiles: Vec<JetProfile>,
    #[serde(default = "default_fit_residual")]
    pub max_fit_residual: f64,
    #[serde(default)]
    pub assert: JetAssert,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JetAssert {
    pub exponent_tolerance: Option<f64>,
    /// Least gap between fitted exponents of profiles with different `k`.
    pub min_separation: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config and resolves defaults that depend on other fields or on
    /// the config's location.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.resolve(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve(&mut self, base: &Path) {
        self.mesh.resolve(base);
        if let Some(f) = &mut self.forward {
            f.levels.iter_mut().for_each(|m| m.resolve(base));
        }
        if let Some(i) = &mut self.identity {
            i.levels.iter_mut().for_each(|m| m.resolve(base));
        }
        if let Some(r) = &mut self.recover {
            r.probe.get_or_insert(RecoveryOptions::default().probe);
            r.source.get_or_insert(RecoveryOptions::default().source);
        }
    }

    fn space(&self, mesh: &MeshSpec) -> Result<Space> {
        let metric = self.metric.build()?;
        Ok(Space::new(Arc::new(mesh.build()?), metric)?.with_exec(self.exec))
    }

    /// Checks everything that can be checked before any solve.
    pub fn validate(&self, sub: Subcommand) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Config(m));
        self.solve.validate().map_err(|e| Error::Config(format!("solve: {e}")))?;
        self.metric.build().map_err(|e| Error::Config(format!("metric: {e}")))?;
        if self.workers == Some(0) {
            return cfg_err("workers must be at least 1".into());
        }
        let index_ok = |len: usize, idx: &[usize]| idx.iter().all(|&i| i < len);
        match sub {
            Subcommand::Forward => {
                let Some(f) = &self.forward else { return missing(sub) };
                f.data.validate()?;
                if let Some(e) = &f.exact {
                    e.validate()?;
                }
                if f.assert.min_order.is_some() && f.levels.len() < 2 {
                    return cfg_err("forward.assert.min_order needs at least two forward.levels".into());
                }
                if (f.assert.max_error.is_some() || f.assert.max_relative_error.is_some() || f.assert.min_order.is_some())
                    && f.exact.is_none()
                {
                    return cfg_err("forward error assertions need forward.exact".into());
                }
            }
            Subcommand::LinearizeCheck => {
                let Some(l) = &self.linearize else { return missing(sub) };
                l.data.iter().try_for_each(|f| f.validate())?;
                if !l.pairs.iter().all(|p| index_ok(l.data.len(), p)) || !l.triples.iter().all(|t| index_ok(l.data.len(), t)) {
                    return cfg_err("linearize: pair or triple index out of range of linearize.data".into());
                }
                if l.w2_steps.iter().chain([&l.w3_step]).any(|h| !(*h > 0.0)) {
                    return cfg_err("linearize: steps must be positive".into());
                }
            }
            Subcommand::IdentityCheck => {
                let Some(i) = &self.identity else { return missing(sub) };
                i.data.iter().try_for_each(|f| f.validate())?;
                if i.levels.is_empty() {
                    return cfg_err("identity.levels must not be empty".into());
                }
                if !i.quadruples.iter().all(|q| index_ok(i.data.len(), q)) {
                    return cfg_err("identity.quadruples index out of range of identity.data".into());
                }
                if i.assert.min_order.is_some() && i.levels.len() < 2 {
                    return cfg_err("identity.assert.min_order needs at least two levels".into());
                }
            }
            Subcommand::AreaPipeline => {
                let Some(a) = &self.area else { return missing(sub) };
                a.data.validate()?;
                if !(a.step > 0.0) {
                    return cfg_err("area.step must be positive".into());
                }
            }
            Subcommand::RecoverQ => {
                let Some(r) = &self.recover else { return missing(sub) };
                r.conformal.validate()?;
                if r.tau_sweep.len() < 2 {
                    return cfg_err("recover.tau_sweep needs at least two values".into());
                }
            }
            Subcommand::BoundaryJet => {
                let Some(b) = &self.boundary_jet else { return missing(sub) };
                b.profiles.iter().try_for_each(|p| p.q.validate())?;
                if b.n_sweep.len() < 2 {
                    return cfg_err("boundary_jet.n_sweep needs at least two values".into());
                }
            }
        }
        Ok(())
    }
}

fn missing(sub: Subcommand) -> Result<()> {
    Err(Error::Config(format!("missing `{}` section for `{sub}`", sub.section())))
}

/// One configured check and its outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            passed: value <= bound,
            detail: format!("{value:.6e} <= {bound:.6e}"),
        }
    }

    fn at_least(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            passed: value >= bound,
            detail: format!("{value:.6e} >= {bound:.6e}"),
        }
    }
}

/// An in-memory CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&'static str]) -> Self {
        Self {
            name: name.into(),
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// Shortest round-trip representation.
fn num(v: f64) -> String {
    format!("{v:e}")
}

fn int(v: usize) -> String {
    v.to_string()
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub subcommand: Subcommand,
    pub tables: Vec<Table>,
    pub assertions: Vec<Assertion>,
    pub summary: serde_json::Value,
    pub timings: BTreeMap<String, f64>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Assertion> {
        self.assertions.iter().filter(|a| !a.passed)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    subcommand: &'a str,
    version: &'a str,
    features: Vec<&'a str>,
    exec: Exec,
    workers: usize,
    config: &'a ExperimentConfig,
    passed: bool,
    assertions: &'a [Assertion],
    summary: &'a serde_json::Value,
    timings_s: &'a BTreeMap<String, f64>,
    outputs: Vec<String>,
}

/// Writes `manifest.json` and every table of `outcome` into `dir`.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, outcome: &RunOutcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut outputs = Vec::new();
    for t in &outcome.tables {
        let file = format!("{}.csv", t.name);
        std::fs::write(dir.join(&file), t.to_csv()?)?;
        outputs.push(file);
    }
    let manifest = Manifest {
        subcommand: outcome.subcommand.as_str(),
        version: env!("CARGO_PKG_VERSION"),
        features: if cfg!(feature = "parallel") { vec!["parallel"] } else { vec![] },
        exec: cfg.exec.effective(),
        workers: if cfg.exec.effective() == Exec::Parallel { par::current_workers() } else { 1 },
        config: cfg,
        passed: outcome.passed(),
        assertions: &outcome.assertions,
        summary: &outcome.summary,
        timings_s: &outcome.timings,
        outputs,
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

struct Clock {
    start: Instant,
    timings: BTreeMap<String, f64>,
}

impl Clock {
    fn new() -> Self {
        Self {
            start: Instant::now(),
            timings: BTreeMap::new(),
        }
    }

    fn stage<R>(&mut self, name: &str, f: impl FnOnce() -> R) -> R {
        let t = Instant::now();
        let r = f();
        *self.timings.entry(name.into()).or_default() += t.elapsed().as_secs_f64();
        r
    }

    fn finish(mut self) -> BTreeMap<String, f64> {
        self.timings.insert("total".into(), self.start.elapsed().as_secs_f64());
        self.timings
    }
}

/// Runs `sub` on a validated config.
pub fn run(sub: Subcommand, cfg: &ExperimentConfig) -> Result<RunOutcome> {
    cfg.validate(sub)?;
    let mut clock = Clock::new();
    let (tables, assertions, summary) = match sub {
        Subcommand::Forward => run_forward(cfg, &mut clock)?,
        Subcommand::LinearizeCheck => run_linearize(cfg, &mut clock)?,
        Subcommand::IdentityCheck => run_identity(cfg, &mut clock)?,
        Subcommand::AreaPipeline => run_area(cfg, &mut clock)?,
        Subcommand::RecoverQ => run_recover(cfg, &mut clock)?,
        Subcommand::BoundaryJet => run_boundary_jet(cfg, &mut clock)?,
    };
    Ok(RunOutcome {
        subcommand: sub,
        tables,
        assertions,
        summary,
        timings: clock.finish(),
    })
}

type Parts = (Vec<Table>, Vec<Assertion>, serde_json::Value);

/// Least-squares slope of `log y` against `log x`.
pub fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    crate::inverse::fit_line(&lx, &ly).0
}

fn run_forward(cfg: &ExperimentConfig, clock: &mut Clock) -> Result<Parts> {
    let fc = cfg.forward.as_ref().expect("validated");
    let levels = if fc.levels.is_empty() {
        vec![cfg.mesh.clone()]
    } else {
        fc.levels.clone()
    };
    let data = fc.data.to_function();
    let exact = fc.exact.as_ref().map(|e| e.to_function());
    let mut level_table = Table::new(
        "levels",
        &["level", "vertices", "mesh_size", "iterations", "residual", "max_error", "relative_error"],
    );
    let mut assertions = Vec::new();
    let mut hs = Vec::new();
    let mut errs = Vec::new();
    let mut max_iterations = 0;
    let mut finest = None;
    for (li, spec) in levels.iter().enumerate() {
        let space = clock.stage("mesh", || cfg.space(spec))?;
        let f = BoundaryData::from_fn(space.mesh(), |p| data.eval(p));
        let (u, report) = clock.stage("solve", || solve_minimal_surface(&space, &f, &cfg.solve))?;
        max_iterations = max_iterations.max(report.iterations);
        let (mut err, mut rel) = (f64::NAN, f64::NAN);
        if let Some(e) = &exact {
            let scale = space.mesh().vertices().iter().map(|&p| e.eval(p).abs()).fold(0.0, f64::max);
            err = u
                .values()
                .iter()
                .zip(space.mesh().vertices())
                .map(|(v, &p)| (v - e.eval(p)).abs())
                .fold(0.0, f64::max);
            rel = if scale > 0.0 { err / scale } else { err };
            hs.push(space.mesh().mesh_size());
            errs.push(rel);
        }
        level_table.push(vec![
            int(li),
            int(space.mesh().num_vertices()),
            num(space.mesh().mesh_size()),
            int(report.iterations),
            num(report.residual),
            num(err),
            num(rel),
        ]);
        finest = Some((space, u, report, err, rel));
    }
    let (space, u, report, err, rel) = finest.expect("at least one level");

    let mut solution = Table::new("solution", &["vertex", "x", "y", "u", "exact", "error"]);
    for (i, (&p, &v)) in space.mesh().vertices().iter().zip(u.values()).enumerate() {
        let ex = exact.as_ref().map_or(f64::NAN, |e| e.eval(p));
        solution.push(vec![int(i), num(p[0]), num(p[1]), num(v), num(ex), num((v - ex).abs())]);
    }

    let mut tables = vec![solution, level_table];
    let mut fv_worst = f64::NAN;
    if fc.first_variation_probes > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut fv = Table::new("first_variation", &["probe", "v_norm", "variation", "ratio"]);
        fv_worst = 0.0;
        let r = mse_residual(&space, &u)?;
        for k in 0..fc.first_variation_probes {
            let vals: Vec<f64> = (0..space.mesh().num_vertices())
                .map(|i| if space.mesh().is_boundary(i) { 0.0 } else { rng.random_range(-1.0..1.0) })
                .collect();
            let norm = vals.iter().map(|v| v * v).sum::<f64>().sqrt();
            let v = ScalarField::new(space.mesh(), vals)?;
            let dv = area_first_variation(&space, &u, &v)?;
            debug_assert!((dv - r.iter().zip(v.values()).map(|(a, b)| a * b).sum::<f64>()).abs() <= 1e-9 * norm);
            let ratio = dv.abs() / (cfg.solve.newton_tol * norm);
            fv_worst = fv_worst.max(ratio);
            fv.push(vec![int(k), num(norm), num(dv), num(ratio)]);
        }
        tables.push(fv);
    }

    let a = &fc.assert;
    if let Some(m) = a.max_iterations {
        assertions.push(Assertion {
            name: "forward.iterations".into(),
            passed: max_iterations <= m,
            detail: format!("{max_iterations} <= {m}"),
        });
    }
    if let Some(b) = a.max_error {
        assertions.push(Assertion::at_most("forward.max_error", err, b));
    }
    if let Some(b) = a.max_relative_error {
        assertions.push(Assertion::at_most("forward.relative_error", rel, b));
    }
    let order = if hs.len() >= 2 { log_slope(&hs, &errs) } else { f64::NAN };
    if let Some(b) = a.min_order {
        assertions.push(Assertion::at_least("forward.order", order, b));
    }
    if let Some(b) = a.first_variation_factor {
        assertions.push(Assertion::at_most("forward.first_variation", fv_worst, b));
    }
    assertions.push(Assertion {
        name: "forward.converged".into(),
        passed: report.converged && report.residual <= cfg.solve.newton_tol,
        detail: format!("residual {:.3e}", report.residual),
    });
    let summary = serde_json::json!({
        "vertices": space.mesh().num_vertices(),
        "mesh_size": space.mesh().mesh_size(),
        "iterations": report.iterations,
        "max_iterations": max_iterations,
        "residual": report.residual,
        "history": report.history,
        "max_error": finite_or_null(err),
        "relative_error": finite_or_null(rel),
        "order": finite_or_null(order),
        "first_variation_worst_ratio": finite_or_null(fv_worst),
    });
    Ok((tables, assertions, summary))
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        serde_json::Value::Null
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn permutations3(t: [usize; 3]) -> [[usize; 3]; 6] {
    let [a, b, c] = t;
    [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]]
}

fn run_linearize(cfg: &ExperimentConfig, clock: &mut Clock) -> Result<Parts> {
    let lc = cfg.linearize.as_ref().expect("validated");
    let space = clock.stage("mesh", || cfg.space(&cfg.mesh))?;
    let data: Vec<BoundaryData> = lc
        .data
        .iter()
        .map(|f| BoundaryData::from_fn(space.mesh(), |p| f.eval(p)))
        .collect();
    let mut assertions = Vec::new();

    let mut w2 = Table::new("w2_sweep", &["j", "k", "h", "sup_norm", "relative"]);
    let mut w2_fits = Vec::new();
    for &[j, k] in &lc.pairs {
        let scale = data[j].max_abs().max(data[k].max_abs());
        let mut sups = Vec::new();
        for &h in &lc.w2_steps {
            let w = clock.stage("w2", || second_linearization_fd(&space, &data[j], &data[k], h, &cfg.solve))?;
            sups.push(w.max_abs());
            w2.push(vec![int(j), int(k), num(h), num(w.max_abs()), num(w.max_abs() / scale)]);
        }
        let slope = log_slope(&lc.w2_steps, &sups);
        let last = sups.last().copied().unwrap_or(0.0) / scale;
        let monotone = sups.windows(2).all(|w| w[1] < w[0]);
        if let Some(b) = lc.assert.w2_max_final {
            assertions.push(Assertion::at_most(&format!("linearize.w2_final[{j},{k}]"), last, b));
        }
        if let Some(b) = lc.assert.w2_min_slope {
            assertions.push(Assertion {
                name: format!("linearize.w2_slope[{j},{k}]"),
                passed: monotone && slope >= b,
                detail: format!("slope {slope:.3} >= {b}, decreasing: {monotone}"),
            });
        }
        w2_fits.push(serde_json::json!({"pair": [j, k], "slope": finite_or_null(slope), "decreasing": monotone, "final_relative": last}));
    }

    let mut w3 = Table::new(
        "w3_check",
        &["j", "k", "l", "sup_pde", "sup_diff", "relative", "symmetry_defect"],
    );
    let mut worst_rel: f64 = 0.0;
    let mut worst_sym: f64 = 0.0;
    let harmonic: Vec<ScalarField> = clock.stage("harmonic", || {
        data.iter().map(|f| solve_laplace_beltrami(&space, f)).collect::<Result<_>>()
    })?;
    for &t in &lc.triples {
        let [j, k, l] = t;
        let pde = clock.stage("w3_pde", || third_linearization_pde(&space, &harmonic[j], &harmonic[k], &harmonic[l]))?;
        let mut sym: f64 = 0.0;
        for [a, b, c] in permutations3(t) {
            let p = third_linearization_pde(&space, &harmonic[a], &harmonic[b], &harmonic[c])?;
            sym = sym.max(sup_diff(pde.values(), p.values()));
        }
        let fd = clock.stage("w3_fd", || third_linearization_fd(&space, &data[j], &data[k], &data[l], lc.w3_step, &cfg.solve))?;
        let diff = sup_diff(pde.values(), fd.values());
        let rel = if pde.max_abs() > 0.0 { diff / pde.max_abs() } else { diff };
        worst_rel = worst_rel.max(rel);
        worst_sym = worst_sym.max(sym);
        w3.push(vec![int(j), int(k), int(l), num(pde.max_abs()), num(diff), num(rel), num(sym)]);
    }
    if !lc.triples.is_empty() {
        if let Some(b) = lc.assert.w3_max_relative {
            assertions.push(Assertion::at_most("linearize.w3_relative", worst_rel, b));
        }
        if let Some(b) = lc.assert.w3_max_symmetry_defect {
            assertions.push(Assertion::at_most("linearize.w3_symmetry", worst_sym, b));
        }
    }
    let summary = serde_json::json!({
        "vertices": space.mesh().num_vertices(),
        "mesh_size": space.mesh().mesh_size(),
        "w2": w2_fits,
        "w3_worst_relative": worst_rel,
        "w3_worst_symmetry_defect": worst_sym,
    });
    Ok((vec![w2, w3], assertions, summary))
}

fn run_identity(cfg: &ExperimentConfig, clock: &mut Clock) -> Result<Parts> {
    let ic = cfg.identity.as_ref().expect("validated");
    let mut table = Table::new(
        "identity",
        &[
            "level", "vertices", "mesh_size", "j", "k", "l", "m", "lhs", "rhs", "residual", "relative_residual", "dn",
            "w_flux", "cubic",
        ],
    );
    let mut per_quad: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); ic.quadruples.len()];
    for (li, spec) in ic.levels.iter().enumerate() {
        let space = clock.stage("mesh", || cfg.space(spec))?;
        let data: Vec<BoundaryData> = ic
            .data
            .iter()
            .map(|f| BoundaryData::from_fn(space.mesh(), |p| f.eval(p)))
            .collect();
        for (qi, &[j, k, l, m]) in ic.quadruples.iter().enumerate() {
            let r = clock.stage("identity", || {
                integral_identity_check(&space, [&data[j], &data[k], &data[l], &data[m]], ic.path, &cfg.solve)
            })?;
            per_quad[qi].0.push(r.mesh_size);
            per_quad[qi].1.push(r.relative_residual);
            table.push(vec![
                int(li),
                int(space.mesh().num_vertices()),
                num(r.mesh_size),
                int(j),
                int(k),
                int(l),
                int(m),
                num(r.lhs),
                num(r.rhs),
                num(r.residual),
                num(r.relative_residual),
                num(r.terms.dn),
                num(r.terms.w_flux),
                num(r.terms.cubic),
            ]);
        }
    }
    let mut assertions = Vec::new();
    let mut fits = Vec::new();
    for (q, (hs, rs)) in ic.quadruples.iter().zip(&per_quad) {
        let order = if hs.len() >= 2 { log_slope(hs, rs) } else { f64::NAN };
        let last = *rs.last().expect("levels not empty");
        let tag = format!("{},{},{},{}", q[0], q[1], q[2], q[3]);
        if let Some(b) = ic.assert.max_final_relative {
            assertions.push(Assertion::at_most(&format!("identity.final_relative[{tag}]"), last, b));
        }
        if let Some(b) = ic.assert.min_order {
            assertions.push(Assertion::at_least(&format!("identity.order[{tag}]"), order, b));
        }
        fits.push(serde_json::json!({"quadruple": q, "order": finite_or_null(order), "final_relative": last}));
    }
    Ok((vec![table], assertions, serde_json::json!({ "fits": fits })))
}

fn run_area(cfg: &ExperimentConfig, clock: &mut Clock) -> Result<Parts> {
    let ac = cfg.area.as_ref().expect("validated");
    let space = clock.stage("mesh", || cfg.space(&cfg.mesh))?;
    let h = BoundaryData::from_fn(space.mesh(), |p| ac.data.eval(p));
    let direct = clock.stage("dn_nonlinear", || dn_nonlinear(&space, &h, &cfg.solve))?;
    let pipe = clock.stage("area_pipeline", || dn_from_area_data(&space, &h, ac.step, &cfg.solve))?;
    let mut table = Table::new(
        "area_pipeline",
        &["k", "vertex", "x", "y", "lambda_direct", "lambda_area", "ng", "tangential_sq", "area_derivative"],
    );
    for (k, &v) in space.mesh().boundary_vertices().iter().enumerate() {
        let p = space.mesh().vertices()[v];
        table.push(vec![
            int(k),
            int(v),
            num(p[0]),
            num(p[1]),
            num(direct.values.values()[k]),
            num(pipe.trace.values()[k]),
            num(pipe.data.ng.values()[k]),
            num(pipe.data.tangential[k]),
            num(pipe.area_derivatives[k]),
        ]);
    }
    let scale = direct.values.max_abs();
    let diff = sup_diff(direct.values.values(), pipe.trace.values());
    let rel = if scale > 0.0 { diff / scale } else { diff };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut round_trip: f64 = 0.0;
    for _ in 0..ac.round_trip_samples {
        let lambda: f64 = rng.random_range(-5.0..5.0);
        let tau2: f64 = rng.random_range(0.0..4.0);
        let back = lambda_from_ng(ng_from_lambda(lambda, tau2), tau2).unwrap_or(f64::INFINITY);
        round_trip = round_trip.max((back - lambda).abs() / lambda.abs().max(1.0));
    }
    let mut assertions = Vec::new();
    if let Some(b) = ac.assert.max_relative {
        assertions.push(Assertion::at_most("area.relative", rel, b));
    }
    if let Some(b) = ac.assert.max_round_trip {
        assertions.push(Assertion::at_most("area.round_trip", round_trip, b));
    }
    let summary = serde_json::json!({
        "vertices": space.mesh().num_vertices(),
        "boundary_vertices": space.mesh().boundary_vertices().len(),
        "area": pipe.data.area,
        "sup_difference": diff,
        "relative": rel,
        "round_trip": round_trip,
    });
    Ok((vec![table], assertions, summary))
}

fn run_recover(cfg: &ExperimentConfig, clock: &mut Clock) -> Result<Parts> {
    let rc = cfg.recover.as_ref().expect("validated");
    let space = clock.stage("mesh", || cfg.space(&cfg.mesh))?;
    let c = rc.conformal.to_function();
    let defaults = RecoveryOptions::default();
    let opts = RecoveryOptions {
        tau_sweep: rc.tau_sweep.clone(),
        probe: rc.probe.unwrap_or(defaults.probe),
        source: rc.source.unwrap_or(defaults.source),
        margin_factor: rc.margin_factor,
        max_fit_residual: rc.max_fit_residual,
        solve: cfg.solve,
    };
    let field = clock.stage("recover", || recover_q_field(&space, &c, &rc.points, &opts));
    let points = match field {
        Ok(f) => f.points,
        Err(Error::UnreliableRecovery(msg)) => {
            log::warn!("{msg}");
            rc.points
                .iter()
                .map(|&p| crate::inverse::recover_q_point(&space, &c, p, &opts))
                .map(|r| r.ok())
                .zip(&rc.points)
                .map(|(r, &p)| {
                    r.unwrap_or(crate::inverse::RecoveryResult {
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
                })
                .collect()
        }
        Err(e) => return Err(e),
    };
    let mut table = Table::new(
        "recovery",
        &["x", "y", "q_true", "q_hat", "abs_error", "slope", "intercept", "fit_residual", "intercept_ratio", "reliable"],
    );
    let mut sweep = Table::new("recovery_sweep", &["x", "y", "tau", "re", "im"]);
    let mut worst_rel: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    let mut all_reliable = true;
    for r in &points {
        let q = 1.0 - 1.0 / c.eval(r.point);
        let e = (r.estimate - q).abs();
        worst_abs = worst_abs.max(if e.is_nan() { f64::INFINITY } else { e });
        if q != 0.0 {
            worst_rel = worst_rel.max(if e.is_nan() { f64::INFINITY } else { e / q.abs() });
        }
        all_reliable &= r.reliable;
        table.push(vec![
            num(r.point[0]),
            num(r.point[1]),
            num(q),
            num(r.estimate),
            num(e),
            num(r.slope),
            num(r.intercept),
            num(r.fit_residual),
            num(r.intercept_ratio),
            r.reliable.to_string(),
        ]);
        for (tau, v) in r.sweep.iter().zip(&r.values) {
            sweep.push(vec![num(r.point[0]), num(r.point[1]), num(*tau), num(v.re), num(v.im)]);
        }
    }
    let mut assertions = Vec::new();
    if let Some(b) = rc.assert.max_relative_error {
        assertions.push(Assertion::at_most("recover.relative_error", worst_rel, b));
    }
    if let Some(b) = rc.assert.max_abs_error {
        assertions.push(Assertion::at_most("recover.abs_error", worst_abs, b));
    }
    if rc.assert.require_reliable {
        assertions.push(Assertion {
            name: "recover.reliable".into(),
            passed: all_reliable,
            detail: format!("all {} points pass fit diagnostics: {all_reliable}", points.len()),
        });
    }
    let summary = serde_json::json!({
        "vertices": space.mesh().num_vertices(),
        "mesh_size": space.mesh().mesh_size(),
        "worst_relative_error": finite_or_null(worst_rel),
        "worst_abs_error": finite_or_null(worst_abs),
        "all_reliable": all_reliable,
    });
    Ok((vec![table, sweep], assertions, summary))
}

fn run_boundary_jet(cfg: &ExperimentConfig, clock: &mut Clock) -> Result<Parts> {
    let bc = cfg.boundary_jet.as_ref().expect("validated");
    let space = clock.stage("mesh", || cfg.space(&cfg.mesh))?;
    let mut values = Table::new("boundary_jet", &["profile", "k", "n", "re", "im", "abs"]);
    let mut fits = Table::new(
        "boundary_jet_fits",
        &["profile", "k", "exponent", "expected", "intercept", "fit_residual", "reliable"],
    );
    let mut assertions = Vec::new();
    let mut fitted = Vec::new();
    for prof in &bc.profiles {
        let q = Coefficient::Function(prof.q.to_function());
        let r = clock.stage("probe", || boundary_jet_probe(&space, &q, bc.point, bc.m, &bc.n_sweep, bc.max_fit_residual))?;
        let expected = expected_exponent(prof.k, bc.m);
        for (n, v) in r.sweep.iter().zip(&r.values) {
            values.push(vec![prof.label.clone(), prof.k.to_string(), num(*n), num(v.re), num(v.im), num(v.norm())]);
        }
        fits.push(vec![
            prof.label.clone(),
            prof.k.to_string(),
            num(r.slope),
            num(expected),
            num(r.intercept),
            num(r.fit_residual),
            r.reliable.to_string(),
        ]);
        if let Some(tol) = bc.assert.exponent_tolerance {
            assertions.push(Assertion {
                name: format!("boundary_jet.exponent[{}]", prof.label),
                passed: (r.slope - expected).abs() <= tol,
                detail: format!("|{:.4} - {expected:.4}| <= {tol}", r.slope),
            });
        }
        fitted.push((prof.k, r.slope));
    }
    let mut separation = f64::INFINITY;
    for (i, a) in fitted.iter().enumerate() {
        for b in &fitted[i + 1..] {
            if a.0 != b.0 {
                separation = separation.min((a.1 - b.1).abs());
            }
        }
    }
    if let Some(b) = bc.assert.min_separation {
        assertions.push(Assertion::at_least("boundary_jet.separation", separation, b));
    }
    let summary = serde_json::json!({
        "vertices": space.mesh().num_vertices(),
        "mesh_size": space.mesh().mesh_size(),
        "separation": finite_or_null(separation),
        "alpha": (bc.m * bc.m + 1) as f64 / (bc.m * bc.m + bc.m + 1) as f64,
    });
    Ok((vec![values, fits], assertions, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_forward() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{"mesh": {"kind": "square", "n": 8},
                "forward": {"data": {"name": "constant", "value": 0.0}, "assert": {"max_iterations": 0}}}"#,
        )
        .unwrap()
    }

    #[test]
    fn unknown_key_is_named() {
        let e = ExperimentConfig::from_json(r#"{"mesh": {"kind": "square", "n": 4}, "mesh_size": 3}"#).unwrap_err();
        assert!(e.to_string().contains("`mesh_size`"), "{e}");
        let e = ExperimentConfig::from_json(r#"{"mesh": {"kind": "square", "n": 4, "m": 2}}"#).unwrap_err();
        assert!(e.to_string().contains("`m`"), "{e}");
    }

    #[test]
    fn missing_section_is_a_config_error() {
        let cfg = zero_forward();
        assert!(matches!(run(Subcommand::BoundaryJet, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn zero_data_forward_passes() {
        let out = run(Subcommand::Forward, &zero_forward()).unwrap();
        assert!(out.passed(), "{:?}", out.assertions);
        assert_eq!(out.summary["iterations"], 0);
    }

    #[test]
    fn resolved_config_fills_disc_size() {
        let mut cfg =
            ExperimentConfig::from_json(r#"{"mesh": {"kind": "disc", "n_radial": 4}}"#).unwrap();
        cfg.resolve(Path::new("."));
        assert_eq!(cfg.mesh, MeshSpec::Disc { n_radial: 4, n_angular: Some(25) });
        let echoed = serde_json::to_value(&cfg).unwrap();
        assert_eq!(echoed["solve"]["newton_tol"], 1e-12);
    }

    #[test]
    fn shortest_float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 12345.678] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }
}
