//! Triangulated planar charts.
//!
//! A [`Mesh`] owns vertex coordinates, positively oriented triangles and the
//! boundary structure derived from them: closed, outward-oriented loops with
//! the domain to the left of every boundary edge.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_markers: Option<Vec<i64>>,
    /// Closed boundary loops, each listed in traversal order (domain on the left).
    loops: Vec<Vec<usize>>,
    boundary_vertices: Vec<usize>,
    /// Position of each vertex in `boundary_vertices`, `usize::MAX` for interior vertices.
    boundary_position: Vec<usize>,
    boundary_edges: Vec<[usize; 2]>,
    vertex_triangles: Vec<Vec<usize>>,
}

/// On-disk mesh layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshFile {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_markers: Option<Vec<i64>>,
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

impl Mesh {
    /// Builds a mesh, reorienting clockwise triangles and validating the topology.
    pub fn new(vertices: Vec<Point>, mut triangles: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        if nv < 3 || triangles.is_empty() {
            return Err(Error::MeshIntegrity("mesh needs at least one triangle".into()));
        }
        if let Some(i) = vertices.iter().position(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(Error::MeshIntegrity(format!("vertex {i} has non-finite coordinates")));
        }
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let bbox_area = (hi[0] - lo[0]) * (hi[1] - lo[1]);

        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&i| i >= nv) {
                return Err(Error::MeshIntegrity(format!("triangle {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::MeshIntegrity(format!("triangle {t} repeats a vertex")));
            }
            let a = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if a.abs() <= 1e-14 * bbox_area {
                return Err(Error::DegenerateTriangle { index: t, area: a.abs() });
            }
            if a < 0.0 {
                tri.swap(1, 2);
            }
        }

        // Directed edges of CCW triangles; an interior edge shows up once in each direction.
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                *edges.entry((a, b)).or_insert(0) += 1;
            }
        }
        let mut next: Vec<usize> = vec![usize::MAX; nv];
        let mut boundary_edges = Vec::new();
        for (&(a, b), &count) in &edges {
            if count > 1 {
                return Err(Error::MeshIntegrity(format!("edge ({a}, {b}) is shared by more than two triangles")));
            }
            match edges.get(&(b, a)) {
                Some(1) => {}
                Some(_) => {
                    return Err(Error::MeshIntegrity(format!(
                        "edge ({b}, {a}) is shared by more than two triangles or inconsistently oriented"
                    )))
                }
                None => {
                    if next[a] != usize::MAX {
                        return Err(Error::MeshIntegrity(format!("boundary pinches at vertex {a}")));
                    }
                    next[a] = b;
                    boundary_edges.push([a, b]);
                }
            }
        }
        if boundary_edges.is_empty() {
            return Err(Error::MeshIntegrity("mesh has no boundary".into()));
        }
        boundary_edges.sort_unstable();

        let mut loops = Vec::new();
        let mut visited = vec![false; nv];
        for &[start, _] in &boundary_edges {
            if visited[start] {
                continue;
            }
            let mut lp = vec![start];
            visited[start] = true;
            let mut cur = next[start];
            while cur != start {
                if cur == usize::MAX {
                    return Err(Error::MeshIntegrity("open boundary chain".into()));
                }
                if visited[cur] {
                    return Err(Error::MeshIntegrity(format!("boundary loop revisits vertex {cur}")));
                }
                visited[cur] = true;
                lp.push(cur);
                cur = next[cur];
            }
            if lp.len() < 3 {
                return Err(Error::MeshIntegrity("boundary loop with fewer than three vertices".into()));
            }
            loops.push(lp);
        }
        let boundary_vertices: Vec<usize> = loops.iter().flatten().copied().collect();
        let mut boundary_position = vec![usize::MAX; nv];
        for (k, &v) in boundary_vertices.iter().enumerate() {
            boundary_position[v] = k;
        }
        let mut vertex_triangles = vec![Vec::new(); nv];
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                vertex_triangles[v].push(t);
            }
        }
        if let Some(v) = vertex_triangles.iter().position(|ts| ts.is_empty()) {
            return Err(Error::MeshIntegrity(format!("vertex {v} belongs to no triangle")));
        }
        Ok(Self {
            vertices,
            triangles,
            boundary_markers: None,
            loops,
            boundary_vertices,
            boundary_position,
            boundary_edges,
            vertex_triangles,
        })
    }

    pub fn from_file_data(data: MeshFile) -> Result<Self> {
        let markers = data.boundary_markers;
        let mut mesh = Self::new(data.vertices, data.triangles)?;
        if let Some(m) = &markers {
            if m.len() != mesh.num_vertices() {
                return Err(Error::MeshIntegrity(format!(
                    "boundary_markers has {} entries for {} vertices",
                    m.len(),
                    mesh.num_vertices()
                )));
            }
        }
        mesh.boundary_markers = markers;
        Ok(mesh)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_file_data(serde_json::from_str(&text)?)
    }

    pub fn to_file_data(&self) -> MeshFile {
        MeshFile {
            vertices: self.vertices.clone(),
            triangles: self.triangles.clone(),
            boundary_markers: self.boundary_markers.clone(),
        }
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&self.to_file_data())?)?;
        Ok(())
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_markers(&self) -> Option<&[i64]> {
        self.boundary_markers.as_deref()
    }

    pub fn boundary_loops(&self) -> &[Vec<usize>] {
        &self.loops
    }

    /// Boundary vertices, loop by loop in traversal order.
    pub fn boundary_vertices(&self) -> &[usize] {
        &self.boundary_vertices
    }

    /// Directed boundary edges `[a, b]` with the domain on the left of `a -> b`.
    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary_position[v] != usize::MAX
    }

    pub fn boundary_position(&self, v: usize) -> Option<usize> {
        let k = self.boundary_position[v];
        (k != usize::MAX).then_some(k)
    }

    pub fn interior_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&v| !self.is_boundary(v)).collect()
    }

    pub fn vertex_triangles(&self, v: usize) -> &[usize] {
        &self.vertex_triangles[v]
    }

    /// Previous and next vertex along the boundary loop through `v`.
    pub fn boundary_neighbors(&self, v: usize) -> Option<(usize, usize)> {
        let pos = self.boundary_position(v)?;
        let mut offset = 0;
        for lp in &self.loops {
            if pos < offset + lp.len() {
                let k = pos - offset;
                let n = lp.len();
                return Some((lp[(k + n - 1) % n], lp[(k + 1) % n]));
            }
            offset += lp.len();
        }
        None
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    /// Longest edge length.
    pub fn mesh_size(&self) -> f64 {
        let mut h: f64 = 0.0;
        for tri in &self.triangles {
            for e in 0..3 {
                let (a, b) = (self.vertices[tri[e]], self.vertices[tri[(e + 1) % 3]]);
                h = h.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            }
        }
        h
    }

    /// Index of the triangle containing `p` (closed), if any. Linear scan.
    pub fn locate(&self, p: Point) -> Option<usize> {
        let tol = -1e-12;
        self.triangles.iter().position(|&[a, b, c]| {
            let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
            let area = signed_area(pa, pb, pc);
            signed_area(p, pb, pc) / area >= tol
                && signed_area(pa, p, pc) / area >= tol
                && signed_area(pa, pb, p) / area >= tol
        })
    }

    /// Vertex closest to `p`.
    pub fn nearest_vertex(&self, p: Point) -> usize {
        let d2 = |q: &Point| (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
        (0..self.num_vertices())
            .min_by(|&i, &j| d2(&self.vertices[i]).total_cmp(&d2(&self.vertices[j])))
            .expect("mesh has vertices")
    }

    /// Uniform triangulation of `[x0, x1] x [y0, y1]` with `nx * ny` cells, each cut along
    /// its lower-left to upper-right diagonal.
    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || x1 <= x0 || y1 <= y0 {
            return Err(Error::InvalidArgument("rectangle needs positive extent and resolution".into()));
        }
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([
                    x0 + (x1 - x0) * i as f64 / nx as f64,
                    y0 + (y1 - y0) * j as f64 / ny as f64,
                ]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                triangles.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                triangles.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        Self::new(vertices, triangles)
    }

    /// Unit square `[0, 1]^2` with `n x n` cells.
    pub fn square(n: usize) -> Result<Self> {
        Self::rectangle(0.0, 1.0, 0.0, 1.0, n, n)
    }

    /// Unit disc from concentric rings: `n_radial` rings, `n_angular` vertices on the
    /// outer circle, inner rings thinned in proportion to their radius.
    pub fn disc(n_radial: usize, n_angular: usize) -> Result<Self> {
        if n_radial == 0 || n_angular < 6 {
            return Err(Error::InvalidArgument("disc needs n_radial >= 1 and n_angular >= 6".into()));
        }
        let mut vertices = vec![[0.0, 0.0]];
        let mut rings: Vec<Vec<usize>> = vec![vec![0]];
        let mut angles: Vec<Vec<f64>> = vec![vec![0.0]];
        for i in 1..=n_radial {
            let r = i as f64 / n_radial as f64;
            let m = ((n_angular as f64 * r).round() as usize).max(6);
            let shift = if i % 2 == 0 { 0.5 } else { 0.0 };
            let mut ring = Vec::with_capacity(m);
            let mut ang = Vec::with_capacity(m);
            for k in 0..m {
                let th = 2.0 * PI * (k as f64 + shift) / m as f64;
                ring.push(vertices.len());
                ang.push(th);
                vertices.push([r * th.cos(), r * th.sin()]);
            }
            rings.push(ring);
            angles.push(ang);
        }
        let mut triangles = Vec::new();
        let first = &rings[1];
        for k in 0..first.len() {
            triangles.push([0, first[k], first[(k + 1) % first.len()]]);
        }
        for i in 1..n_radial {
            zip_rings(&rings[i], &angles[i], &rings[i + 1], &angles[i + 1], &mut triangles);
        }
        Self::new(vertices, triangles)
    }

    /// Annulus `r0 <= |x| <= r1` with `n_r` radial layers and `n_a` vertices per ring.
    pub fn annulus(r0: f64, r1: f64, n_r: usize, n_a: usize) -> Result<Self> {
        Self::annulus_with_radii(&linspace(r0, r1, n_r), n_a)
    }

    /// Annulus whose ring radii follow `r = r0 + (r1 - r0) * s^grading` for uniform `s`;
    /// `grading > 1` clusters rings near the inner circle.
    pub fn annulus_graded(r0: f64, r1: f64, n_r: usize, n_a: usize, grading: f64) -> Result<Self> {
        if grading <= 0.0 {
            return Err(Error::InvalidArgument("grading must be positive".into()));
        }
        let radii: Vec<f64> = linspace(0.0, 1.0, n_r)
            .into_iter()
            .map(|s| r0 + (r1 - r0) * s.powf(grading))
            .collect();
        Self::annulus_with_radii(&radii, n_a)
    }

    fn annulus_with_radii(radii: &[f64], n_a: usize) -> Result<Self> {
        if radii.len() < 2 || n_a < 3 || radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("annulus needs 0 < r0 < r1, n_r >= 1, n_a >= 3".into()));
        }
        let mut vertices = Vec::with_capacity(radii.len() * n_a);
        for (i, &r) in radii.iter().enumerate() {
            let shift = if i % 2 == 0 { 0.0 } else { 0.5 };
            for k in 0..n_a {
                let th = 2.0 * PI * (k as f64 + shift) / n_a as f64;
                vertices.push([r * th.cos(), r * th.sin()]);
            }
        }
        let id = |i: usize, k: usize| i * n_a + k % n_a;
        let mut triangles = Vec::with_capacity(2 * (radii.len() - 1) * n_a);
        for i in 0..radii.len() - 1 {
            for k in 0..n_a {
                if i % 2 == 0 {
                    // outer ring is shifted forward by half a step
                    triangles.push([id(i, k), id(i, k + 1), id(i + 1, k)]);
                    triangles.push([id(i, k + 1), id(i + 1, k + 1), id(i + 1, k)]);
                } else {
                    triangles.push([id(i, k), id(i, k + 1), id(i + 1, k + 1)]);
                    triangles.push([id(i, k), id(i + 1, k + 1), id(i + 1, k)]);
                }
            }
        }
        Self::new(vertices, triangles)
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect()
}

/// Stitches two concentric rings into a band of triangles, always advancing along
/// whichever ring has the smaller next angle.
fn zip_rings(inner: &[usize], ia: &[f64], outer: &[usize], oa: &[f64], out: &mut Vec<[usize; 3]>) {
    let (m, n) = (inner.len(), outer.len());
    let angle = |a: &[f64], k: usize| a[k % a.len()] + 2.0 * PI * (k / a.len()) as f64;
    let (mut i, mut j) = (0, 0);
    while i < m || j < n {
        let advance_inner = if i == m {
            false
        } else if j == n {
            true
        } else {
            angle(ia, i + 1) < angle(oa, j + 1)
        };
        if advance_inner {
            out.push([inner[i % m], inner[(i + 1) % m], outer[j % n]]);
            i += 1;
        } else {
            out.push([inner[i % m], outer[(j + 1) % n], outer[j % n]]);
            j += 1;
        }
    }
}
