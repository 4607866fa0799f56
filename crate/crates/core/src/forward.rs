//! Damped Newton solver for the minimal surface equation and the
//! Laplace–Beltrami problem it linearizes to.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{BoundaryData, Scalar, ScalarField};
use crate::geometry::{pair, Space};
use crate::sparse::{CsrMatrix, SplitComplex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    /// Stop once the interior residual ℓ² norm is at or below this.
    pub newton_tol: f64,
    pub max_iter: usize,
    /// Backtracking factor applied to the step length.
    pub damping: f64,
    pub max_halvings: usize,
    /// Relative tolerance of the iterative fallback solver.
    pub linear_solver_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            newton_tol: 1e-12,
            max_iter: 30,
            damping: 0.5,
            max_halvings: 30,
            linear_solver_tol: 1e-12,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0) {
            return Err(Error::InvalidArgument("newton_tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return Err(Error::InvalidArgument("damping must lie in (0, 1)".into()));
        }
        if !(self.linear_solver_tol > 0.0) {
            return Err(Error::InvalidArgument("linear_solver_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Newton steps taken after the initial guess.
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Residual norm of the initial guess followed by one entry per step.
    pub history: Vec<f64>,
}

/// `s = √(1 + |∇u|²_g)` at each quadrature point of each triangle.
fn area_density(space: &Space, u: &[f64]) -> Vec<[f64; 3]> {
    space.exec().map_range(space.triangles().len(), |t| {
        let du = space.covector(u, t);
        space.triangles()[t]
            .quad
            .map(|q| (1.0 + pair(q.ginv, du, du)).sqrt())
    })
}

/// `R_i(u) = ∫ g(∇u, ∇φ_i) / √(1 + |∇u|²_g) dV_g` for every vertex `i`.
/// Interior rows vanish at a discrete solution; boundary rows are the weak flux.
pub fn mse_residual(space: &Space, u: &ScalarField) -> Result<Vec<f64>> {
    space.check_len(u.values())?;
    Ok(residual_vec(space, u.values()))
}

fn residual_vec(space: &Space, u: &[f64]) -> Vec<f64> {
    space.assemble_vector(|t| {
        let tg = &space.triangles()[t];
        let du = space.covector(u, t);
        let mut l = [0.0; 3];
        for q in &tg.quad {
            let s = (1.0 + pair(q.ginv, du, du)).sqrt();
            for a in 0..3 {
                l[a] += q.dv * q.ginv.form(du, tg.grads[a]) / s;
            }
        }
        l
    })
}

/// Jacobian of [`mse_residual`] at `u`.
pub fn mse_linearized_operator(space: &Space, u: &ScalarField) -> Result<CsrMatrix> {
    space.check_len(u.values())?;
    Ok(jacobian(space, u.values()))
}

fn jacobian(space: &Space, u: &[f64]) -> CsrMatrix {
    space.assemble_matrix(|t| {
        let tg = &space.triangles()[t];
        let du = space.covector(u, t);
        let mut l = [[0.0; 3]; 3];
        for q in &tg.quad {
            let s2 = 1.0 + pair(q.ginv, du, du);
            let s = s2.sqrt();
            let gu: [f64; 3] = std::array::from_fn(|a| q.ginv.form(du, tg.grads[a]));
            for a in 0..3 {
                for b in 0..3 {
                    let k = q.ginv.form(tg.grads[a], tg.grads[b]);
                    l[a][b] += q.dv * (k / s - gu[a] * gu[b] / (s2 * s));
                }
            }
        }
        l
    })
}

fn interior_norm(space: &Space, r: &[f64]) -> f64 {
    space.layout().interior().iter().map(|&i| r[i] * r[i]).sum::<f64>().sqrt()
}

/// Discrete harmonic extension: `Δ_g v = 0` on interior rows, `v|∂ = f`.
pub fn solve_laplace_beltrami<T: Scalar + SplitComplex>(space: &Space, f: &BoundaryData<T>) -> Result<ScalarField<T>> {
    check_boundary(space, f)?;
    let zero = vec![T::zero(); space.mesh().num_vertices()];
    Ok(ScalarField::from_vec_unchecked(space.solve_stiffness(&zero, f)?))
}

pub(crate) fn check_boundary<T: Scalar>(space: &Space, f: &BoundaryData<T>) -> Result<()> {
    let n = space.mesh().boundary_vertices().len();
    if f.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: f.len(),
        });
    }
    if let Some(i) = f.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

/// Solves the minimal surface equation with Dirichlet data `f`, starting from
/// the Laplace–Beltrami extension of `f`.
pub fn solve_minimal_surface(
    space: &Space,
    f: &BoundaryData,
    opts: &SolveOptions,
) -> Result<(ScalarField, SolveReport)> {
    let u0 = solve_laplace_beltrami(space, f)?;
    newton(space, u0.into_values(), opts)
}

/// Same as [`solve_minimal_surface`] but starting from `initial`, whose boundary
/// values are replaced by `f`.
pub fn solve_minimal_surface_from(
    space: &Space,
    f: &BoundaryData,
    initial: &ScalarField,
    opts: &SolveOptions,
) -> Result<(ScalarField, SolveReport)> {
    check_boundary(space, f)?;
    space.check_len(initial.values())?;
    let mut u = initial.values().to_vec();
    for (k, &v) in space.mesh().boundary_vertices().iter().enumerate() {
        u[v] = f.values()[k];
    }
    newton(space, u, opts)
}

fn newton(space: &Space, mut u: Vec<f64>, opts: &SolveOptions) -> Result<(ScalarField, SolveReport)> {
    opts.validate()?;
    let mut r = residual_vec(space, &u);
    let mut norm = interior_norm(space, &r);
    let mut history = vec![norm];
    let zero_bc = BoundaryData::zeros(space.mesh());
    let mut iterations = 0;
    while norm > opts.newton_tol {
        if iterations == opts.max_iter {
            return Err(Error::Diverged {
                iterations,
                residual: norm,
                history,
            });
        }
        iterations += 1;
        let j = jacobian(space, &u);
        let solver = space.layout().factor(&j, opts.linear_solver_tol)?;
        let minus_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = space.solve_dirichlet(&j, &solver, &minus_r, &zero_bc)?;

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + alpha * d).collect();
            let rt = residual_vec(space, &trial);
            let nt = interior_norm(space, &rt);
            if !nt.is_finite() {
                return Err(Error::Breakdown(format!(
                    "non-finite residual in line search at step {iterations}"
                )));
            }
            if nt <= (1.0 - 1e-4 * alpha) * norm || nt <= opts.newton_tol {
                accepted = Some((trial, rt, nt));
                break;
            }
            alpha *= opts.damping;
        }
        match accepted {
            Some((trial, rt, nt)) => {
                u = trial;
                r = rt;
                norm = nt;
                history.push(norm);
                log::debug!("newton step {iterations}: residual {norm:.3e}, step {alpha}");
            }
            None => {
                return Err(Error::Diverged {
                    iterations,
                    residual: norm,
                    history,
                })
            }
        }
    }
    let report = SolveReport {
        iterations,
        residual: norm,
        converged: true,
        history,
    };
    Ok((ScalarField::from_vec_unchecked(u), report))
}

/// Quadrature of `√(1 + |∇u|²_g) dV_g` split per triangle, used by area routines.
pub(crate) fn area_per_triangle(space: &Space, u: &[f64]) -> Vec<f64> {
    let dens = area_density(space, u);
    space
        .triangles()
        .iter()
        .zip(&dens)
        .map(|(tg, s)| tg.quad.iter().zip(s).map(|(q, s)| q.dv * s).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::mesh::Mesh;
    use crate::metric::MetricField;

    fn square(n: usize) -> Space {
        Space::new(Arc::new(Mesh::square(n).unwrap()), MetricField::flat()).unwrap()
    }

    #[test]
    fn zero_data_gives_zero() {
        let s = square(8);
        let (u, rep) = solve_minimal_surface(&s, &BoundaryData::zeros(s.mesh()), &SolveOptions::default()).unwrap();
        assert!(u.max_abs() == 0.0);
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn affine_data_is_exact() {
        let s = square(16);
        let aff = |p: [f64; 2]| 0.3 + 0.5 * p[0] - 0.7 * p[1];
        let f = BoundaryData::from_fn(s.mesh(), aff);
        let (u, rep) = solve_minimal_surface(&s, &f, &SolveOptions::default()).unwrap();
        assert!(rep.iterations <= 2);
        for (v, p) in u.values().iter().zip(s.mesh().vertices()) {
            assert!((v - aff(*p)).abs() < 1e-10);
        }
    }

    #[test]
    fn jacobian_matches_directional_difference() {
        let s = square(6);
        let u = ScalarField::from_fn(s.mesh(), |p| (p[0] * 3.0).sin() * p[1]);
        let phi: Vec<f64> = s.mesh().vertices().iter().map(|p| (p[0] - 0.3) * (p[1] + 0.1)).collect();
        let j = mse_linearized_operator(&s, &u).unwrap();
        assert!(j.symmetry_defect() < 1e-12);
        let jp = j.mul_vec(&phi);
        let d = 1e-6;
        let up: Vec<f64> = u.values().iter().zip(&phi).map(|(a, b)| a + d * b).collect();
        let r0 = residual_vec(&s, u.values());
        let r1 = residual_vec(&s, &up);
        for i in 0..jp.len() {
            assert!(((r1[i] - r0[i]) / d - jp[i]).abs() < 1e-5);
        }
    }

    #[test]
    fn jacobian_at_zero_is_stiffness() {
        let s = square(5);
        let j = mse_linearized_operator(&s, &ScalarField::zeros(s.mesh())).unwrap();
        assert_eq!(j.max_abs_diff(s.stiffness()), 0.0);
    }

    #[test]
    fn invalid_options_rejected() {
        let o = SolveOptions {
            damping: 1.0,
            ..Default::default()
        };
        assert!(o.validate().is_err());
    }
}
