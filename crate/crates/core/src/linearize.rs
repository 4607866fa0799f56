//! ε-linearizations of the solution map `f ↦ u_f` at `f = 0`.

use crate::error::{Error, Result};
use crate::field::{BoundaryData, Scalar, ScalarField};
use crate::forward::{solve_laplace_beltrami, solve_minimal_surface, SolveOptions};
use crate::geometry::{pair, Space};
use crate::sparse::SplitComplex;

/// Boundary data `f_ε = Σ ε_j f_j`.
#[derive(Debug, Clone)]
pub struct EpsilonCombination {
    pub data: Vec<BoundaryData>,
    pub eps: Vec<f64>,
}

impl EpsilonCombination {
    pub fn new(data: Vec<BoundaryData>, eps: Vec<f64>) -> Result<Self> {
        if data.len() != eps.len() {
            return Err(Error::LengthMismatch {
                expected: data.len(),
                got: eps.len(),
            });
        }
        Ok(Self { data, eps })
    }

    pub fn combined(&self) -> BoundaryData {
        let refs: Vec<&BoundaryData> = self.data.iter().collect();
        BoundaryData::combination(&refs, &self.eps)
    }
}

pub fn first_linearization<T: Scalar + SplitComplex>(space: &Space, f: &BoundaryData<T>) -> Result<ScalarField<T>> {
    solve_laplace_beltrami(space, f)
}

/// Solves the nonlinear problem for every ε in `stencil` (in parallel) and
/// returns `Σ weight · u_ε`.
fn stencil_sum(
    space: &Space,
    data: &[&BoundaryData],
    stencil: &[(Vec<f64>, f64)],
    opts: &SolveOptions,
) -> Result<Vec<f64>> {
    let solutions = space.exec().try_map(stencil, |(eps, _)| {
        let f = BoundaryData::combination(data, eps);
        solve_minimal_surface(space, &f, opts).map(|(u, _)| u)
    })?;
    let mut acc = vec![0.0; space.mesh().num_vertices()];
    for (u, (_, w)) in solutions.iter().zip(stencil) {
        for (a, v) in acc.iter_mut().zip(u.values()) {
            *a += w * v;
        }
    }
    Ok(acc)
}

/// Sign patterns of the `2^n` corners of `{±1}ⁿ` and their products.
fn corners(n: usize) -> Vec<(Vec<f64>, f64)> {
    (0..1usize << n)
        .map(|bits| {
            let s: Vec<f64> = (0..n).map(|i| if bits >> i & 1 == 1 { -1.0 } else { 1.0 }).collect();
            let prod = s.iter().product();
            (s, prod)
        })
        .collect()
}

fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {h}")));
    }
    Ok(())
}

/// Mixed central second difference of `u_ε` in `(ε_j, ε_k)`.
pub fn second_linearization_fd(
    space: &Space,
    fj: &BoundaryData,
    fk: &BoundaryData,
    h: f64,
    opts: &SolveOptions,
) -> Result<ScalarField> {
    check_step(h)?;
    let stencil: Vec<(Vec<f64>, f64)> = corners(2)
        .into_iter()
        .map(|(s, p)| (s.iter().map(|x| x * h).collect(), p / (4.0 * h * h)))
        .collect();
    Ok(ScalarField::from_vec_unchecked(stencil_sum(space, &[fj, fk], &stencil, opts)?))
}

/// Mixed central third difference of `u_ε` in `(ε_j, ε_k, ε_l)`.
pub fn third_linearization_fd(
    space: &Space,
    fj: &BoundaryData,
    fk: &BoundaryData,
    fl: &BoundaryData,
    h: f64,
    opts: &SolveOptions,
) -> Result<ScalarField> {
    check_step(h)?;
    let stencil: Vec<(Vec<f64>, f64)> = corners(3)
        .into_iter()
        .map(|(s, p)| (s.iter().map(|x| x * h).collect(), p / (8.0 * h * h * h)))
        .collect();
    Ok(ScalarField::from_vec_unchecked(stencil_sum(space, &[fj, fk, fl], &stencil, opts)?))
}

/// The covector `S = dv_j g(∇v_l,∇v_k) + dv_k g(∇v_l,∇v_j) + dv_l g(∇v_j,∇v_k)` at a point.
#[inline]
pub(crate) fn cubic_covector<T: Scalar>(s: crate::metric::Sym2, dj: [T; 2], dk: [T; 2], dl: [T; 2]) -> [T; 2] {
    let (lk, lj, jk) = (pair(s, dl, dk), pair(s, dl, dj), pair(s, dj, dk));
    [
        dj[0] * lk + dk[0] * lj + dl[0] * jk,
        dj[1] * lk + dk[1] * lj + dl[1] * jk,
    ]
}

/// `L_i = ∫ g(S, ∇φ_i) dV_g`, the weak form of the cubic source.
pub fn third_linearization_source<T: Scalar>(
    space: &Space,
    vj: &ScalarField<T>,
    vk: &ScalarField<T>,
    vl: &ScalarField<T>,
) -> Result<Vec<T>> {
    for v in [vj, vk, vl] {
        space.check_len(v.values())?;
    }
    Ok(space.load_from_covector(|t, q| {
        cubic_covector(
            q.ginv,
            space.covector(vj.values(), t),
            space.covector(vk.values(), t),
            space.covector(vl.values(), t),
        )
    }))
}

/// Solves `K w = L` with `w|∂ = 0`.
pub fn third_linearization_pde<T: Scalar + SplitComplex>(
    space: &Space,
    vj: &ScalarField<T>,
    vk: &ScalarField<T>,
    vl: &ScalarField<T>,
) -> Result<ScalarField<T>> {
    let l = third_linearization_source(space, vj, vk, vl)?;
    let w = space.solve_stiffness(&l, &BoundaryData::zeros(space.mesh()))?;
    Ok(ScalarField::from_vec_unchecked(w))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::mesh::Mesh;
    use crate::metric::MetricField;

    #[test]
    fn corner_weights_cancel_polynomials_of_lower_degree() {
        let c = corners(3);
        assert_eq!(c.len(), 8);
        let s: f64 = c.iter().map(|(_, p)| p).sum();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn source_is_zero_for_constant_slot() {
        let s = Space::new(Arc::new(Mesh::square(5).unwrap()), MetricField::flat()).unwrap();
        let x = ScalarField::from_fn(s.mesh(), |p| p[0]);
        let one = ScalarField::from_fn(s.mesh(), |_| 1.0);
        let l = third_linearization_source(&s, &x, &one, &x).unwrap();
        assert!(l.iter().all(|v| v.abs() < 1e-15));
    }
}
