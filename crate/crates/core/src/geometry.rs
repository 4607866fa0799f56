//! Riemannian calculus on a triangulated chart.
//!
//! A [`Space`] couples a [`Mesh`] with a [`MetricField`] sampled at a fixed
//! three-point interior quadrature rule. Gradients are kept as Euclidean
//! covectors (constant per triangle); the metric enters only through the
//! inverse `g⁻¹` and the volume weight `√det g` at each quadrature point.

use std::sync::{Arc, OnceLock};

use faer::linalg::solvers::SolveLstsq;
use faer::Mat;

use crate::error::{Error, Result};
use crate::field::{BoundaryData, Scalar, ScalarField};
use crate::mesh::{Mesh, Point};
use crate::metric::{MetricField, Sym2};
use crate::par::Exec;
use crate::sparse::{conjugate_gradient, CsrMatrix, DirichletLayout, ReducedSolver, SplitComplex};

/// Barycentric coordinates of the degree-2 interior rule, equal weights 1/3.
const QUAD_BARY: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];

/// Two-point Gauss rule on [0, 1].
const GAUSS2: [(f64, f64); 2] = [(0.211_324_865_405_187_1, 0.5), (0.788_675_134_594_812_9, 0.5)];

#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub x: Point,
    pub bary: [f64; 3],
    pub ginv: Sym2,
    /// Quadrature weight times `√det g` times the Euclidean triangle area.
    pub dv: f64,
}

#[derive(Debug, Clone)]
pub struct TriGeom {
    pub vertices: [usize; 3],
    /// Euclidean gradients of the three hat functions.
    pub grads: [[f64; 2]; 3],
    pub area: f64,
    pub quad: [QuadPoint; 3],
    /// Inverse metric at the centroid.
    pub ginv_centroid: Sym2,
}

/// `a · S · b` for covectors, extended bilinearly to complex entries.
#[inline]
pub fn pair<T: Scalar>(s: Sym2, a: [T; 2], b: [T; 2]) -> T {
    a[0] * (b[0] * s.a11 + b[1] * s.a12) + a[1] * (b[0] * s.a12 + b[1] * s.a22)
}

#[inline]
fn pair_real<T: Scalar>(s: Sym2, a: [T; 2], b: [f64; 2]) -> T {
    a[0] * (s.a11 * b[0] + s.a12 * b[1]) + a[1] * (s.a12 * b[0] + s.a22 * b[1])
}

/// g-orthonormal frame and arc-length data along the boundary.
#[derive(Debug, Clone)]
pub struct BoundaryGeometry {
    /// Outward unit normal (vector components), per boundary vertex.
    pub normal: Vec<[f64; 2]>,
    /// Unit tangent along the loop direction.
    pub tangent: Vec<[f64; 2]>,
    /// Lumped arc-length weights `dS_g`.
    pub ds: Vec<f64>,
    /// Metric at each boundary vertex.
    pub metric: Vec<Sym2>,
    /// g-lengths of the boundary edges `[a, b]` (boundary positions), in loop order.
    pub edges: Vec<([usize; 2], f64)>,
    mass: CsrMatrix,
    recovery: Vec<Recovery>,
}

#[derive(Debug, Clone)]
struct Recovery {
    nodes: Vec<usize>,
    dx: Vec<f64>,
    dy: Vec<f64>,
}

impl BoundaryGeometry {
    pub fn len(&self) -> usize {
        self.normal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normal.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.ds.iter().sum()
    }

    /// Consistent P1 mass matrix of the boundary in g-arclength.
    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    /// `aᵀ M b`, the boundary L² pairing.
    pub fn pairing<T: Scalar>(&self, a: &[T], b: &[T]) -> T {
        let mb = self.mass.mul_vec(b);
        a.iter().zip(&mb).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
    }

    /// Solves `M q = r`.
    pub fn solve_mass<T: Scalar + SplitComplex>(&self, r: &[T]) -> Result<Vec<T>> {
        let n = r.len();
        let mut parts = Vec::with_capacity(T::PARTS);
        for k in 0..T::PARTS {
            let b: Vec<f64> = r.iter().map(|v| v.part(k)).collect();
            parts.push(conjugate_gradient(&self.mass, &b, 1e-15, 10 * n.max(50))?);
        }
        Ok((0..n)
            .map(|i| T::assemble(&parts.iter().map(|c| c[i]).collect::<Vec<_>>()))
            .collect())
    }

    /// Derivative along the unit tangent, by length-weighted averaging of the
    /// two adjacent edge slopes.
    pub fn tangential_derivative<T: Scalar>(&self, f: &[T]) -> Vec<T> {
        let n = self.len();
        let mut num = vec![T::zero(); n];
        let mut len = vec![0.0; n];
        for &([a, b], l) in &self.edges {
            let d = f[b] - f[a];
            num[a] += d;
            num[b] += d;
            len[a] += l;
            len[b] += l;
        }
        num.iter().zip(&len).map(|(&d, &l)| d * (1.0 / l)).collect()
    }

    /// Euclidean gradient covector of `values` at boundary position `k`, by
    /// least-squares quadratic fit over the two-ring patch.
    pub fn recovered_gradient<T: Scalar>(&self, values: &[T], k: usize) -> [T; 2] {
        let r = &self.recovery[k];
        let mut g = [T::zero(); 2];
        for ((&v, &cx), &cy) in r.nodes.iter().zip(&r.dx).zip(&r.dy) {
            g[0] += values[v] * cx;
            g[1] += values[v] * cy;
        }
        g
    }

    /// Plain normal derivative `ν(u)` from the recovered gradient.
    pub fn recovered_normal_derivative<T: Scalar>(&self, values: &[T]) -> Vec<T> {
        (0..self.len())
            .map(|k| {
                let g = self.recovered_gradient(values, k);
                g[0] * self.normal[k][0] + g[1] * self.normal[k][1]
            })
            .collect()
    }
}

/// A mesh with a metric and the cached operators built from them.
pub struct Space {
    mesh: Arc<Mesh>,
    metric: MetricField,
    exec: Exec,
    tris: Vec<TriGeom>,
    pattern: CsrMatrix,
    layout: Arc<DirichletLayout>,
    stiffness: OnceLock<CsrMatrix>,
    laplace: OnceLock<ReducedSolver>,
    boundary: OnceLock<BoundaryGeometry>,
}

impl std::fmt::Debug for Space {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Space")
            .field("vertices", &self.mesh.num_vertices())
            .field("triangles", &self.mesh.num_triangles())
            .field("metric", &self.metric)
            .field("exec", &self.exec)
            .finish()
    }
}

impl Space {
    pub fn new(mesh: Arc<Mesh>, metric: MetricField) -> Result<Self> {
        let layout = Arc::new(DirichletLayout::new(mesh.num_vertices(), |v| mesh.is_boundary(v)));
        let pattern = CsrMatrix::from_triangles(mesh.num_vertices(), mesh.triangles());
        Self::build(mesh, metric, Exec::default(), pattern, layout)
    }

    /// Same mesh, different metric. Shares the sparsity pattern and the
    /// symbolic factorization.
    pub fn with_metric(&self, metric: MetricField) -> Result<Self> {
        Self::build(
            self.mesh.clone(),
            metric,
            self.exec,
            self.pattern.zeros_like(),
            self.layout.clone(),
        )
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    fn build(
        mesh: Arc<Mesh>,
        metric: MetricField,
        exec: Exec,
        pattern: CsrMatrix,
        layout: Arc<DirichletLayout>,
    ) -> Result<Self> {
        let tris = exec
            .map_range(mesh.num_triangles(), |t| tri_geom(&mesh, &metric, t))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            mesh,
            metric,
            exec,
            tris,
            pattern,
            layout,
            stiffness: OnceLock::new(),
            laplace: OnceLock::new(),
            boundary: OnceLock::new(),
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn triangles(&self) -> &[TriGeom] {
        &self.tris
    }

    pub fn layout(&self) -> &DirichletLayout {
        &self.layout
    }

    pub fn metric_eval(&self, p: Point) -> Result<Sym2> {
        self.metric.eval(p)
    }

    /// Euclidean gradient covector of the linear interpolant on triangle `t`.
    #[inline]
    pub fn covector<T: Scalar>(&self, values: &[T], t: usize) -> [T; 2] {
        let tg = &self.tris[t];
        let mut g = [T::zero(); 2];
        for a in 0..3 {
            let v = values[tg.vertices[a]];
            g[0] += v * tg.grads[a][0];
            g[1] += v * tg.grads[a][1];
        }
        g
    }

    /// `g⁻¹ ∂u` on triangle `t`, with the metric taken at the centroid.
    pub fn riemannian_gradient<T: Scalar>(&self, u: &ScalarField<T>, t: usize) -> [T; 2] {
        let d = self.covector(u.values(), t);
        let s = self.tris[t].ginv_centroid;
        [d[0] * s.a11 + d[1] * s.a12, d[0] * s.a12 + d[1] * s.a22]
    }

    /// `g(∇u, ∇v)` on triangle `t`, with the metric taken at the centroid.
    pub fn inner_product<T: Scalar>(&self, u: &ScalarField<T>, v: &ScalarField<T>, t: usize) -> T {
        pair(
            self.tris[t].ginv_centroid,
            self.covector(u.values(), t),
            self.covector(v.values(), t),
        )
    }

    /// Total g-area.
    pub fn volume(&self) -> f64 {
        self.tris.iter().flat_map(|t| t.quad.iter()).map(|q| q.dv).sum()
    }

    /// Sums `f(t, q)` over all quadrature points, in a fixed order.
    pub fn integrate<T: Scalar>(&self, f: impl Fn(usize, &QuadPoint) -> T + Sync + Send) -> T {
        let parts = self.exec.map_range(self.tris.len(), |t| {
            let tg = &self.tris[t];
            let mut acc = T::zero();
            for q in &tg.quad {
                acc += f(t, q) * q.dv;
            }
            acc
        });
        parts.into_iter().fold(T::zero(), |a, b| a + b)
    }

    /// Assembles `Σ_t local(t)` into the shared pattern. Locals are computed
    /// with the space's execution mode and accumulated in triangle order.
    pub fn assemble_matrix(&self, local: impl Fn(usize) -> [[f64; 3]; 3] + Sync + Send) -> CsrMatrix {
        let locals = self.exec.map_range(self.tris.len(), local);
        let mut a = self.pattern.zeros_like();
        for (tg, l) in self.tris.iter().zip(&locals) {
            a.add_local(&tg.vertices, l);
        }
        a
    }

    /// Assembles `Σ_t local(t)` into a vertex vector.
    pub fn assemble_vector<T: Scalar>(&self, local: impl Fn(usize) -> [T; 3] + Sync + Send) -> Vec<T> {
        let locals = self.exec.map_range(self.tris.len(), local);
        let mut b = vec![T::zero(); self.mesh.num_vertices()];
        for (tg, l) in self.tris.iter().zip(&locals) {
            for a in 0..3 {
                b[tg.vertices[a]] += l[a];
            }
        }
        b
    }

    /// `A_ij = Σ_t w_t ∫_t g(∇φ_i, ∇φ_j) dV_g`.
    pub fn assemble_weighted_stiffness(&self, weights: &[f64]) -> Result<CsrMatrix> {
        if weights.len() != self.tris.len() {
            return Err(Error::LengthMismatch {
                expected: self.tris.len(),
                got: weights.len(),
            });
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(self.assemble_matrix(|t| {
            let mut l = self.local_stiffness(t);
            for row in l.iter_mut() {
                for v in row.iter_mut() {
                    *v *= weights[t];
                }
            }
            l
        }))
    }

    /// `∫_t g(∇φ_a, ∇φ_b) dV_g` for the three hats of triangle `t`.
    pub fn local_stiffness(&self, t: usize) -> [[f64; 3]; 3] {
        let tg = &self.tris[t];
        let mut l = [[0.0; 3]; 3];
        for q in &tg.quad {
            for a in 0..3 {
                for b in 0..3 {
                    l[a][b] += q.dv * q.ginv.form(tg.grads[a], tg.grads[b]);
                }
            }
        }
        l
    }

    /// Unweighted stiffness matrix (positive Laplace–Beltrami), cached.
    pub fn stiffness(&self) -> &CsrMatrix {
        self.stiffness
            .get_or_init(|| self.assemble_matrix(|t| self.local_stiffness(t)))
    }

    /// `∫ g(S, ∇φ_i) dV_g` for a covector field `S` given per quadrature point.
    pub fn load_from_covector<T: Scalar>(&self, s: impl Fn(usize, &QuadPoint) -> [T; 2] + Sync + Send) -> Vec<T> {
        self.assemble_vector(|t| {
            let tg = &self.tris[t];
            let mut l = [T::zero(); 3];
            for q in &tg.quad {
                let sq = s(t, q);
                for a in 0..3 {
                    l[a] += pair_real(q.ginv, sq, tg.grads[a]) * q.dv;
                }
            }
            l
        })
    }

    /// Factors the interior block of `a`.
    pub fn factor(&self, a: &CsrMatrix) -> Result<ReducedSolver> {
        self.layout.factor(a, 1e-12)
    }

    /// Solves `A x = rhs` on interior rows with `x|∂ = f`.
    pub fn solve_dirichlet<T: Scalar + SplitComplex>(
        &self,
        a: &CsrMatrix,
        solver: &ReducedSolver,
        rhs: &[T],
        f: &BoundaryData<T>,
    ) -> Result<Vec<T>> {
        let mut g = vec![T::zero(); self.mesh.num_vertices()];
        for (k, &v) in self.mesh.boundary_vertices().iter().enumerate() {
            g[v] = f.values()[k];
        }
        self.layout.solve(a, solver, rhs, &g)
    }

    pub(crate) fn laplace_solver(&self) -> Result<&ReducedSolver> {
        if let Some(s) = self.laplace.get() {
            return Ok(s);
        }
        let s = self.factor(self.stiffness())?;
        Ok(self.laplace.get_or_init(|| s))
    }

    /// Discrete Laplace–Beltrami solve `K v = b` (interior rows), `v|∂ = f`.
    pub fn solve_stiffness<T: Scalar + SplitComplex>(&self, rhs: &[T], f: &BoundaryData<T>) -> Result<Vec<T>> {
        let solver = self.laplace_solver()?;
        self.solve_dirichlet(self.stiffness(), solver, rhs, f)
    }

    /// Boundary frame, arc-length and recovery data, cached.
    pub fn boundary(&self) -> Result<&BoundaryGeometry> {
        if let Some(b) = self.boundary.get() {
            return Ok(b);
        }
        let b = boundary_geometry(&self.mesh, &self.metric)?;
        Ok(self.boundary.get_or_init(|| b))
    }

    pub(crate) fn check_len<T>(&self, v: &[T]) -> Result<()> {
        if v.len() != self.mesh.num_vertices() {
            return Err(Error::LengthMismatch {
                expected: self.mesh.num_vertices(),
                got: v.len(),
            });
        }
        Ok(())
    }
}

fn tri_geom(mesh: &Mesh, metric: &MetricField, index: usize) -> Result<TriGeom> {
    let tri = mesh.triangles()[index];
    let p = tri.map(|i| mesh.vertices()[i]);
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
    if area <= 0.0 {
        return Err(Error::DegenerateTriangle { index, area });
    }
    let mut grads = [[0.0; 2]; 3];
    for a in 0..3 {
        let (b, c) = (p[(a + 1) % 3], p[(a + 2) % 3]);
        // rotate the opposite edge inward and scale to unit height
        grads[a] = [(b[1] - c[1]) / (2.0 * area), (c[0] - b[0]) / (2.0 * area)];
    }
    let mut quad = [QuadPoint {
        x: [0.0; 2],
        bary: [0.0; 3],
        ginv: Sym2::IDENTITY,
        dv: 0.0,
    }; 3];
    for (q, bary) in quad.iter_mut().zip(QUAD_BARY) {
        let x = [
            bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
            bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
        ];
        let g = metric.eval(x)?;
        *q = QuadPoint {
            x,
            bary,
            ginv: g.inverse(),
            dv: area * g.det().sqrt() / 3.0,
        };
    }
    let centroid = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
    Ok(TriGeom {
        vertices: tri,
        grads,
        area,
        quad,
        ginv_centroid: metric.eval(centroid)?.inverse(),
    })
}

fn g_length(metric: &MetricField, a: Point, b: Point) -> Result<f64> {
    let t = [b[0] - a[0], b[1] - a[1]];
    let mut l = 0.0;
    for (s, w) in GAUSS2 {
        let g = metric.eval([a[0] + s * t[0], a[1] + s * t[1]])?;
        l += w * g.form(t, t).sqrt();
    }
    Ok(l)
}

fn boundary_geometry(mesh: &Mesh, metric: &MetricField) -> Result<BoundaryGeometry> {
    let bv = mesh.boundary_vertices();
    let n = bv.len();
    if n == 0 {
        return Err(Error::MeshIntegrity("mesh has no boundary".into()));
    }
    let verts = mesh.vertices();
    let gv: Vec<Sym2> = bv.iter().map(|&v| metric.eval(verts[v])).collect::<Result<_>>()?;
    let pos = |v: usize| mesh.boundary_position(v).expect("boundary vertex");

    // Euclidean outward edge covectors accumulated at both endpoints.
    let mut covec = vec![[0.0; 2]; n];
    let mut ds = vec![0.0; n];
    let mut edges = Vec::with_capacity(n);
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for lp in mesh.boundary_loops() {
        let m = lp.len();
        if m < 3 {
            return Err(Error::MeshIntegrity("open boundary chain".into()));
        }
        for i in 0..m {
            let (a, b) = (lp[i], lp[(i + 1) % m]);
            let (pa, pb) = (verts[a], verts[b]);
            let t = [pb[0] - pa[0], pb[1] - pa[1]];
            let el = (t[0] * t[0] + t[1] * t[1]).sqrt();
            // domain is on the left, so the outward covector is the right-hand rotation
            let nu = [t[1] / el, -t[0] / el];
            let (ka, kb) = (pos(a), pos(b));
            for k in [ka, kb] {
                covec[k][0] += nu[0];
                covec[k][1] += nu[1];
            }
            let l = g_length(metric, pa, pb)?;
            ds[ka] += 0.5 * l;
            ds[kb] += 0.5 * l;
            edges.push(([ka, kb], l));

            // consistent mass with the g-length density sampled at Gauss points
            let mut local = [[0.0; 2]; 2];
            for (s, w) in GAUSS2 {
                let g = metric.eval([pa[0] + s * t[0], pa[1] + s * t[1]])?;
                let dens = w * g.form(t, t).sqrt();
                let phi = [1.0 - s, s];
                for x in 0..2 {
                    for y in 0..2 {
                        local[x][y] += dens * phi[x] * phi[y];
                    }
                }
            }
            let idx = [ka, kb];
            for x in 0..2 {
                for y in 0..2 {
                    rows[idx[x]].push((idx[y], local[x][y]));
                }
            }
        }
    }
    let mass = CsrMatrix::from_rows(n, rows);

    let mut normal = Vec::with_capacity(n);
    let mut tangent = Vec::with_capacity(n);
    for k in 0..n {
        let g = gv[k];
        let gi = g.inverse();
        // raise the averaged covector and normalize in g
        let c = covec[k];
        let nv = gi.apply(c);
        let s = g.form(nv, nv).sqrt();
        let nu = [nv[0] / s, nv[1] / s];
        // τ ⟂_g ν: the g-rotation of ν, oriented along the loop
        let j = [-(g.a12 * nu[0] + g.a22 * nu[1]), g.a11 * nu[0] + g.a12 * nu[1]];
        let js = g.form(j, j).sqrt();
        let mut tau = [j[0] / js, j[1] / js];
        let (prev, next) = mesh.boundary_neighbors(bv[k]).expect("boundary vertex");
        let dir = [verts[next][0] - verts[prev][0], verts[next][1] - verts[prev][1]];
        if g.form(tau, dir) < 0.0 {
            tau = [-tau[0], -tau[1]];
        }
        normal.push(nu);
        tangent.push(tau);
    }

    let recovery = bv.iter().map(|&v| recovery_stencil(mesh, v)).collect::<Result<_>>()?;

    Ok(BoundaryGeometry {
        normal,
        tangent,
        ds,
        metric: gv,
        edges,
        mass,
        recovery,
    })
}

/// Least-squares quadratic fit on the two-ring of `v`; returns the rows of the
/// pseudo-inverse that produce the gradient at `v`.
fn recovery_stencil(mesh: &Mesh, v: usize) -> Result<Recovery> {
    let ring = |set: &[usize]| {
        let mut out: Vec<usize> = set
            .iter()
            .flat_map(|&u| mesh.vertex_triangles(u).iter().flat_map(|&t| mesh.triangles()[t]))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    };
    let mut nodes = ring(&ring(&[v]));
    if nodes.len() < 8 {
        nodes = ring(&nodes);
    }
    let p = mesh.vertices()[v];
    let h = nodes
        .iter()
        .map(|&u| {
            let q = mesh.vertices()[u];
            ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt()
        })
        .fold(0.0, f64::max);
    let m = nodes.len();
    let design = Mat::<f64>::from_fn(m, 6, |r, c| {
        let q = mesh.vertices()[nodes[r]];
        let (x, y) = ((q[0] - p[0]) / h, (q[1] - p[1]) / h);
        [1.0, x, y, x * x, x * y, y * y][c]
    });
    let identity = Mat::<f64>::identity(m, m);
    let pinv = design.qr().solve_lstsq(&identity);
    let dx: Vec<f64> = (0..m).map(|r| pinv[(1, r)] / h).collect();
    let dy: Vec<f64> = (0..m).map(|r| pinv[(2, r)] / h).collect();
    if dx.iter().chain(&dy).any(|c| !c.is_finite()) {
        return Err(Error::UnreliableRecovery(format!("gradient recovery at vertex {v} is singular")));
    }
    Ok(Recovery { nodes, dx, dy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::ScalarFunction;

    fn flat(mesh: Mesh) -> Space {
        Space::new(Arc::new(mesh), MetricField::flat()).unwrap()
    }

    #[test]
    fn gradient_and_inner_product_examples() {
        let s = flat(Mesh::square(4).unwrap());
        let x = ScalarField::from_fn(s.mesh(), |p| p[0]);
        let y = ScalarField::from_fn(s.mesh(), |p| p[1]);
        for t in 0..s.triangles().len() {
            let g = s.riemannian_gradient(&x, t);
            assert!((g[0] - 1.0).abs() < 1e-12 && g[1].abs() < 1e-12);
            assert!((s.inner_product(&x, &x, t) - 1.0).abs() < 1e-12);
            assert!(s.inner_product(&x, &y, t).abs() < 1e-12);
        }
        let s2 = s.with_metric(MetricField::flat().rescaled(ScalarFunction::constant(2.0))).unwrap();
        let g = s2.riemannian_gradient(&x, 0);
        assert!((g[0] - 0.5).abs() < 1e-12);
        assert!((s2.inner_product(&x, &x, 0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn stiffness_kills_constants() {
        let s = flat(Mesh::disc(6, 24).unwrap());
        let k = s.stiffness();
        let r = k.mul_vec(&vec![1.0; s.mesh().num_vertices()]);
        assert!(r.iter().all(|v| v.abs() < 1e-12));
        assert!(k.symmetry_defect() < 1e-14);
    }

    #[test]
    fn disc_boundary_frame() {
        let s = flat(Mesh::disc(10, 48).unwrap());
        let b = s.boundary().unwrap();
        let bv = s.mesh().boundary_vertices();
        for (k, &v) in bv.iter().enumerate() {
            let p = s.mesh().vertices()[v];
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!((b.normal[k][0] - p[0] / r).abs() < 1e-12);
            assert!((b.normal[k][1] - p[1] / r).abs() < 1e-12);
            let g = b.metric[k];
            assert!((g.form(b.tangent[k], b.tangent[k]) - 1.0).abs() < 1e-12);
            assert!(g.form(b.tangent[k], b.normal[k]).abs() < 1e-12);
        }
        let l = b.total_length();
        assert!((l - 2.0 * std::f64::consts::PI).abs() < 5e-3, "{l}");
        let s4 = s.with_metric(MetricField::flat().rescaled(ScalarFunction::constant(4.0))).unwrap();
        assert!((s4.boundary().unwrap().total_length() - 2.0 * l).abs() < 1e-12);
    }

    #[test]
    fn recovered_gradient_is_exact_for_quadratics() {
        let s = flat(Mesh::disc(6, 24).unwrap());
        let u: Vec<f64> = s.mesh().vertices().iter().map(|p| p[0] * p[0] - 3.0 * p[0] * p[1] + p[1]).collect();
        let b = s.boundary().unwrap();
        for (k, &v) in s.mesh().boundary_vertices().iter().enumerate() {
            let p = s.mesh().vertices()[v];
            let g = b.recovered_gradient(&u, k);
            assert!((g[0] - (2.0 * p[0] - 3.0 * p[1])).abs() < 1e-10);
            assert!((g[1] - (-3.0 * p[0] + 1.0)).abs() < 1e-10);
        }
    }
}
