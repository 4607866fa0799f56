//! Compressed sparse rows, Dirichlet elimination and the SPD solvers behind them.

use std::sync::{Arc, OnceLock};

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, LltRef, SymbolicCholesky, SymmetricOrdering,
};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat, Par, Side};

use crate::error::{Error, Result};
use crate::field::Scalar;

/// Square sparse matrix in CSR layout with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix whose pattern couples every pair of vertices sharing a triangle.
    pub fn from_triangles(n: usize, triangles: &[[usize; 3]]) -> Self {
        let mut adj: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for tri in triangles {
            for &a in tri {
                for &b in tri {
                    adj[a].push(b);
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Self {
            n,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    /// Builds from unsorted `(column, value)` lists per row; duplicates are summed.
    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            for (j, v) in row {
                if col_idx.len() > *row_ptr.last().unwrap() && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            values: vec![0.0; self.values.len()],
            ..self.clone()
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        cols.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Adds `local[a][b]` at `(idx[a], idx[b])`; the entries must lie in the pattern.
    pub fn add_local(&mut self, idx: &[usize; 3], local: &[[f64; 3]; 3]) {
        for a in 0..3 {
            for b in 0..3 {
                let k = self.position(idx[a], idx[b]).expect("entry outside sparsity pattern");
                self.values[k] += local[a][b];
            }
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn mul_vec<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                let mut acc = T::zero();
                for (j, a) in self.row(i) {
                    acc += x[j] * a;
                }
                acc
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|A_ij - B_ij|`; the patterns must agree.
    pub fn max_abs_diff(&self, other: &CsrMatrix) -> f64 {
        assert_eq!(self.col_idx, other.col_idx, "pattern mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn symmetry_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.n {
            for (j, a) in self.row(i) {
                d = d.max((a - self.get(j, i)).abs());
            }
        }
        d
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, a) in self.row(i) {
                row[j] = a;
            }
        }
        out
    }
}

/// Split of the unknowns into Dirichlet (boundary) and free (interior) vertices, with
/// the fill-reducing symbolic factorization of the interior block cached on first use.
#[derive(Debug)]
pub struct DirichletLayout {
    interior: Vec<usize>,
    local: Vec<usize>,
    symbolic: OnceLock<Arc<SymbolicCholesky<usize>>>,
}

impl DirichletLayout {
    pub fn new(n: usize, is_boundary: impl Fn(usize) -> bool) -> Self {
        let interior: Vec<usize> = (0..n).filter(|&i| !is_boundary(i)).collect();
        let mut local = vec![usize::MAX; n];
        for (k, &i) in interior.iter().enumerate() {
            local[i] = k;
        }
        Self {
            interior,
            local,
            symbolic: OnceLock::new(),
        }
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn num_free(&self) -> usize {
        self.interior.len()
    }

    fn interior_block(&self, a: &CsrMatrix) -> SparseColMat<usize, f64> {
        let mut triplets = Vec::with_capacity(a.nnz());
        for (k, &i) in self.interior.iter().enumerate() {
            for (j, v) in a.row(i) {
                let l = self.local[j];
                // lower triangle is all the factorization reads
                if l != usize::MAX && l >= k {
                    triplets.push(Triplet::new(l, k, v));
                }
            }
        }
        let m = self.interior.len();
        SparseColMat::try_new_from_triplets(m, m, &triplets).expect("valid triplets")
    }

    fn symbolic(&self, block: &SparseColMat<usize, f64>) -> Result<Arc<SymbolicCholesky<usize>>> {
        if let Some(s) = self.symbolic.get() {
            return Ok(s.clone());
        }
        let s = factorize_symbolic_cholesky(
            block.symbolic(),
            Side::Lower,
            SymmetricOrdering::Amd,
            CholeskySymbolicParams::default(),
        )
        .map_err(|e| Error::Solver(format!("symbolic factorization: {e:?}")))?;
        Ok(self.symbolic.get_or_init(|| Arc::new(s)).clone())
    }

    /// Factors the interior block of `a`, falling back to conjugate gradients when
    /// the Cholesky factorization fails.
    pub fn factor(&self, a: &CsrMatrix, cg_tol: f64) -> Result<ReducedSolver> {
        if self.interior.is_empty() {
            return Ok(ReducedSolver {
                n: 0,
                inner: Inner::Empty,
            });
        }
        let block = self.interior_block(a);
        let symbolic = self.symbolic(&block)?;
        let mut values = vec![0.0; symbolic.len_val()];
        let scratch = symbolic.factorize_numeric_llt_scratch::<f64>(Par::Seq, Default::default());
        let numeric = symbolic.factorize_numeric_llt(
            &mut values,
            block.as_ref(),
            Side::Lower,
            Default::default(),
            Par::Seq,
            MemStack::new(&mut MemBuffer::new(scratch)),
            Default::default(),
        );
        let inner = match numeric {
            Ok(_) => Inner::Cholesky { symbolic, values },
            Err(e) => {
                log::warn!("cholesky failed ({e:?}); falling back to conjugate gradients");
                Inner::Cg {
                    matrix: self.reduced_csr(a),
                    tol: cg_tol,
                }
            }
        };
        Ok(ReducedSolver {
            n: self.interior.len(),
            inner,
        })
    }

    fn reduced_csr(&self, a: &CsrMatrix) -> CsrMatrix {
        let m = self.interior.len();
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &i in &self.interior {
            for (j, v) in a.row(i) {
                let l = self.local[j];
                if l != usize::MAX {
                    col_idx.push(l);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n: m,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Solves `A x = rhs` on the interior with `x = dirichlet` on the boundary.
    /// `dirichlet` is a full-length vector whose interior entries are ignored;
    /// `rhs` is full-length, boundary rows are ignored.
    pub fn solve<T: Scalar + SplitComplex>(
        &self,
        a: &CsrMatrix,
        solver: &ReducedSolver,
        rhs: &[T],
        dirichlet: &[T],
    ) -> Result<Vec<T>> {
        let n = a.dim();
        let mut x = dirichlet.to_vec();
        for i in &self.interior {
            x[*i] = T::zero();
        }
        // b_I - A_IB g_B
        let mut b: Vec<T> = Vec::with_capacity(self.interior.len());
        for &i in &self.interior {
            let mut acc = rhs[i];
            for (j, v) in a.row(i) {
                if self.local[j] == usize::MAX {
                    acc += -(dirichlet[j] * v);
                }
            }
            b.push(acc);
        }
        let sol = solver.solve(&b)?;
        for (k, &i) in self.interior.iter().enumerate() {
            x[i] = sol[k];
        }
        debug_assert_eq!(x.len(), n);
        Ok(x)
    }
}

enum Inner {
    Empty,
    Cholesky {
        symbolic: Arc<SymbolicCholesky<usize>>,
        values: Vec<f64>,
    },
    Cg {
        matrix: CsrMatrix,
        tol: f64,
    },
}

/// Factorized interior system.
pub struct ReducedSolver {
    n: usize,
    inner: Inner,
}

/// Splitting of a scalar into real columns, so real factorizations serve complex data.
pub trait SplitComplex: Sized {
    const PARTS: usize;
    fn part(self, k: usize) -> f64;
    fn assemble(parts: &[f64]) -> Self;
}

impl SplitComplex for f64 {
    const PARTS: usize = 1;
    fn part(self, _: usize) -> f64 {
        self
    }
    fn assemble(parts: &[f64]) -> Self {
        parts[0]
    }
}

impl SplitComplex for num_complex::Complex64 {
    const PARTS: usize = 2;
    fn part(self, k: usize) -> f64 {
        if k == 0 {
            self.re
        } else {
            self.im
        }
    }
    fn assemble(parts: &[f64]) -> Self {
        num_complex::Complex64::new(parts[0], parts[1])
    }
}

impl ReducedSolver {
    pub fn is_direct(&self) -> bool {
        matches!(self.inner, Inner::Cholesky { .. })
    }

    pub fn solve<T: Scalar + SplitComplex>(&self, b: &[T]) -> Result<Vec<T>> {
        assert_eq!(b.len(), self.n);
        let cols = T::PARTS;
        let mut parts: Vec<Vec<f64>> = (0..cols).map(|k| b.iter().map(|v| v.part(k)).collect()).collect();
        match &self.inner {
            Inner::Empty => {}
            Inner::Cholesky { symbolic, values } => {
                let mut rhs = Mat::<f64>::from_fn(self.n, cols, |i, k| parts[k][i]);
                let llt = LltRef::<'_, usize, f64>::new(symbolic, values);
                let scratch = symbolic.solve_in_place_scratch::<f64>(cols, Par::Seq);
                llt.solve_in_place_with_conj(
                    Conj::No,
                    rhs.as_mut(),
                    Par::Seq,
                    MemStack::new(&mut MemBuffer::new(scratch)),
                );
                for (k, part) in parts.iter_mut().enumerate() {
                    for (i, v) in part.iter_mut().enumerate() {
                        *v = rhs[(i, k)];
                    }
                }
            }
            Inner::Cg { matrix, tol } => {
                for part in parts.iter_mut() {
                    *part = conjugate_gradient(matrix, part, *tol, 20 * self.n.max(100))?;
                }
            }
        }
        Ok((0..self.n)
            .map(|i| {
                let p: Vec<f64> = parts.iter().map(|c| c[i]).collect();
                T::assemble(&p)
            })
            .collect())
    }
}

/// Unpreconditioned CG on an SPD matrix; stops when `‖r‖ <= tol * ‖b‖`.
pub fn conjugate_gradient(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        if rr.sqrt() <= tol * bnorm {
            return Ok(x);
        }
        let ap = a.mul_vec(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Solver("matrix is not positive definite".into()));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr.sqrt() <= tol * bnorm {
        Ok(x)
    } else {
        Err(Error::Solver(format!(
            "conjugate gradients stalled at relative residual {:.3e}",
            rr.sqrt() / bnorm
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_laplacian(n: usize) -> CsrMatrix {
        // 1D Laplacian on a path, as a CSR with tridiagonal pattern
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..n {
            if i > 0 {
                col_idx.push(i - 1);
                values.push(-1.0);
            }
            col_idx.push(i);
            values.push(2.0);
            if i + 1 < n {
                col_idx.push(i + 1);
                values.push(-1.0);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    #[test]
    fn dirichlet_solve_reproduces_linear_profile() {
        let n = 11;
        let a = path_laplacian(n);
        let layout = DirichletLayout::new(n, |i| i == 0 || i == n - 1);
        let solver = layout.factor(&a, 1e-12).unwrap();
        assert!(solver.is_direct());
        let mut g = vec![0.0; n];
        g[n - 1] = 1.0;
        let x = layout.solve(&a, &solver, &vec![0.0; n], &g).unwrap();
        for (i, xi) in x.iter().enumerate() {
            assert!((xi - i as f64 / (n - 1) as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn complex_rhs_splits_into_real_solves() {
        let n = 6;
        let a = path_laplacian(n);
        let layout = DirichletLayout::new(n, |i| i == 0 || i == n - 1);
        let solver = layout.factor(&a, 1e-12).unwrap();
        let mut g = vec![num_complex::Complex64::new(0.0, 0.0); n];
        g[n - 1] = num_complex::Complex64::new(2.0, -1.0);
        let x = layout.solve(&a, &solver, &vec![num_complex::Complex64::new(0.0, 0.0); n], &g).unwrap();
        let t = 3.0 / (n - 1) as f64;
        assert!((x[3] - g[n - 1] * t).norm() < 1e-14);
    }

    #[test]
    fn cg_matches_direct() {
        let a = path_laplacian(30);
        let b: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let x = conjugate_gradient(&a, &b, 1e-13, 1000).unwrap();
        let r = a.mul_vec(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-10);
        }
    }
}
