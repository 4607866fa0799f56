//! Dirichlet-to-Neumann traces, the area functional and the reconstruction
//! of the nonlinear DN map from area data.
//!
//! Normal derivatives are extracted variationally: the boundary rows of the
//! assembled operator give the weak flux `r`, and the nodal flux density is
//! `M⁻¹ r` with `M` the boundary mass matrix in g-arclength. For the minimal
//! surface operator the density is `N_g = ∂_ν u / √(1 + |∇u|²_g)`, from which
//! `Λ = ∂_ν u` follows algebraically through `|∇u|² = |τf|² + Λ²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{BoundaryData, Scalar, ScalarField};
use crate::forward::{
    area_per_triangle, mse_residual, solve_laplace_beltrami, solve_minimal_surface, solve_minimal_surface_from,
    SolveOptions, SolveReport,
};
use crate::geometry::{pair, Space};
use crate::linearize::third_linearization_pde;
use crate::linearize::third_linearization_source;
use crate::sparse::SplitComplex;

/// Boundary trace of a Dirichlet problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DNTrace<T = f64> {
    /// `Λ f = ∂_ν u` per boundary vertex.
    pub values: BoundaryData<T>,
    /// Nodal weak flux density of the operator (`N_g` for the nonlinear map).
    pub flux: BoundaryData<T>,
    /// `∂_ν u` from the recovered boundary gradient.
    pub normal_derivative: BoundaryData<T>,
}

/// Area-side description of a boundary value `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaData {
    pub area: f64,
    pub ng: BoundaryData,
    /// `|τh|²_g` per boundary vertex.
    pub tangential: Vec<f64>,
}

fn boundary_rows<T: Copy>(space: &Space, full: &[T]) -> Vec<T> {
    space.mesh().boundary_vertices().iter().map(|&v| full[v]).collect()
}

/// `N = Λ / √(1 + |τh|² + Λ²)`.
pub fn ng_from_lambda(lambda: f64, tau2: f64) -> f64 {
    lambda / (1.0 + tau2 + lambda * lambda).sqrt()
}

/// Inverse of [`ng_from_lambda`]: `Λ = sign(N)·√(N²(1 + |τh|²)/(1 − N²))`.
pub fn lambda_from_ng(n: f64, tau2: f64) -> Option<f64> {
    if !(n.abs() < 1.0) {
        return None;
    }
    Some(n * ((1.0 + tau2) / ((1.0 - n) * (1.0 + n))).sqrt())
}

fn invert(space: &Space, ng: &[f64], tau2: &[f64]) -> Result<Vec<f64>> {
    ng.iter()
        .zip(tau2)
        .enumerate()
        .map(|(k, (&n, &t))| {
            lambda_from_ng(n, t).ok_or(Error::IllConditionedInversion {
                vertex: space.mesh().boundary_vertices()[k],
                value: n,
            })
        })
        .collect()
}

/// `|τf|²_g` per boundary vertex.
pub fn tangential_square(space: &Space, f: &BoundaryData) -> Result<Vec<f64>> {
    let b = space.boundary()?;
    Ok(b.tangential_derivative(f.values()).iter().map(|d| d * d).collect())
}

/// DN trace of an already solved minimal surface `u` with boundary values `f`.
pub fn trace_of_solution(space: &Space, u: &ScalarField, f: &BoundaryData) -> Result<DNTrace> {
    let b = space.boundary()?;
    let r = boundary_rows(space, &mse_residual(space, u)?);
    let q = b.solve_mass(&r)?;
    let lambda = invert(space, &q, &tangential_square(space, f)?)?;
    Ok(DNTrace {
        values: BoundaryData::new(space.mesh(), lambda)?,
        flux: BoundaryData::new(space.mesh(), q)?,
        normal_derivative: BoundaryData::new(space.mesh(), b.recovered_normal_derivative(u.values()))?,
    })
}

pub fn dn_nonlinear(space: &Space, f: &BoundaryData, opts: &SolveOptions) -> Result<DNTrace> {
    dn_nonlinear_with_solution(space, f, opts).map(|(t, _, _)| t)
}

pub fn dn_nonlinear_with_solution(
    space: &Space,
    f: &BoundaryData,
    opts: &SolveOptions,
) -> Result<(DNTrace, ScalarField, SolveReport)> {
    let (u, rep) = solve_minimal_surface(space, f, opts)?;
    Ok((trace_of_solution(space, &u, f)?, u, rep))
}

/// Weak flux density `M⁻¹ (K v)|∂` of a discrete harmonic field.
pub fn harmonic_flux<T: Scalar + SplitComplex>(space: &Space, v: &ScalarField<T>) -> Result<Vec<T>> {
    let r = boundary_rows(space, &space.stiffness().mul_vec(v.values()));
    space.boundary()?.solve_mass(&r)
}

/// DN trace of the Laplace–Beltrami problem.
pub fn dn_linear<T: Scalar + SplitComplex>(space: &Space, f: &BoundaryData<T>) -> Result<DNTrace<T>> {
    let v = solve_laplace_beltrami(space, f)?;
    let q = harmonic_flux(space, &v)?;
    let nd = space.boundary()?.recovered_normal_derivative(v.values());
    Ok(DNTrace {
        values: BoundaryData::new(space.mesh(), q.clone())?,
        flux: BoundaryData::new(space.mesh(), q)?,
        normal_derivative: BoundaryData::new(space.mesh(), nd)?,
    })
}

/// Splits complex data into real parts, with the unit that multiplies each.
fn real_parts<T: Scalar + SplitComplex>(f: &BoundaryData<T>) -> Vec<(BoundaryData, T)> {
    (0..T::PARTS)
        .filter_map(|k| {
            let vals: Vec<f64> = f.values().iter().map(|v| v.part(k)).collect();
            if vals.iter().all(|&x| x == 0.0) {
                return None;
            }
            let mut unit = vec![0.0; T::PARTS];
            unit[k] = 1.0;
            Some((BoundaryData::from_vec_unchecked(vals), T::assemble(&unit)))
        })
        .collect()
}

/// Third mixed central difference of `Λ(ε_j f_j + ε_k f_k + ε_l f_l)` with step `h`.
/// Complex data is expanded trilinearly into real triples.
pub fn dn_third_derivative_fd<T: Scalar + SplitComplex>(
    space: &Space,
    fj: &BoundaryData<T>,
    fk: &BoundaryData<T>,
    fl: &BoundaryData<T>,
    h: f64,
    opts: &SolveOptions,
) -> Result<BoundaryData<T>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {h}")));
    }
    let (pj, pk, pl) = (real_parts(fj), real_parts(fk), real_parts(fl));
    let mut jobs = Vec::new();
    for (a, ua) in &pj {
        for (b, ub) in &pk {
            for (c, uc) in &pl {
                let unit = *ua * *ub * *uc;
                for bits in 0..8u32 {
                    let s: Vec<f64> = (0..3).map(|i| if bits >> i & 1 == 1 { -h } else { h }).collect();
                    let sign = s.iter().map(|x| x.signum()).product::<f64>();
                    jobs.push((a, b, c, s, unit * (sign / (8.0 * h * h * h))));
                }
            }
        }
    }
    let traces = space.exec().try_map(&jobs, |(a, b, c, s, _)| {
        let f = BoundaryData::combination(&[*a, *b, *c], s);
        dn_nonlinear(space, &f, opts)
    })?;
    let mut acc = vec![T::zero(); fj.len()];
    for (tr, job) in traces.iter().zip(&jobs) {
        for (x, &v) in acc.iter_mut().zip(tr.values.values()) {
            *x += job.4 * v;
        }
    }
    Ok(BoundaryData::from_vec_unchecked(acc))
}

/// Exact third derivative of `Λ` at zero: the weak flux of `∇w − S` plus the
/// cubic terms that relate the flux density to `∂_ν u`.
pub fn dn_third_derivative_exact<T: Scalar + SplitComplex>(
    space: &Space,
    fj: &BoundaryData<T>,
    fk: &BoundaryData<T>,
    fl: &BoundaryData<T>,
) -> Result<BoundaryData<T>> {
    let v = [fj, fk, fl]
        .iter()
        .map(|f| solve_laplace_beltrami(space, f))
        .collect::<Result<Vec<_>>>()?;
    let w = third_linearization_pde(space, &v[0], &v[1], &v[2])?;
    dn_third_from_fields(space, &v[0], &v[1], &v[2], &w)
}

/// As [`dn_third_derivative_exact`], given the harmonic fields and `w`.
pub fn dn_third_from_fields<T: Scalar + SplitComplex>(
    space: &Space,
    vj: &ScalarField<T>,
    vk: &ScalarField<T>,
    vl: &ScalarField<T>,
    w: &ScalarField<T>,
) -> Result<BoundaryData<T>> {
    let b = space.boundary()?;
    let kw = space.stiffness().mul_vec(w.values());
    let l = third_linearization_source(space, vj, vk, vl)?;
    let r: Vec<T> = space
        .mesh()
        .boundary_vertices()
        .iter()
        .map(|&i| kw[i] - l[i])
        .collect();
    let mut out = b.solve_mass(&r)?;
    let lam = [harmonic_flux(space, vj)?, harmonic_flux(space, vk)?, harmonic_flux(space, vl)?];
    let tau = [vj, vk, vl].map(|v| b.tangential_derivative(&boundary_rows(space, v.values())));
    for (k, o) in out.iter_mut().enumerate() {
        let (l, t) = ([lam[0][k], lam[1][k], lam[2][k]], [tau[0][k], tau[1][k], tau[2][k]]);
        for (a, b2, c) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
            *o += l[a] * (t[b2] * t[c] + l[b2] * l[c]);
        }
    }
    Ok(BoundaryData::from_vec_unchecked(out))
}

/// `∫ √(1 + |∇u|²_g) dV_g`.
pub fn area(space: &Space, u: &ScalarField) -> Result<f64> {
    space.check_len(u.values())?;
    Ok(area_per_triangle(space, u.values()).iter().sum())
}

/// `∫ g(∇u, ∇v) / √(1 + |∇u|²_g) dV_g`.
pub fn area_first_variation(space: &Space, u: &ScalarField, v: &ScalarField) -> Result<f64> {
    space.check_len(u.values())?;
    space.check_len(v.values())?;
    Ok(space.integrate(|t, q| {
        let du = space.covector(u.values(), t);
        let dv = space.covector(v.values(), t);
        pair(q.ginv, du, dv) / (1.0 + pair(q.ginv, du, du)).sqrt()
    }))
}

/// `N_g(h) = ∂_ν u / √(1 + |∇u|²_g)` from the recovered boundary gradient of the solution.
pub fn ng_map(space: &Space, h: &BoundaryData, opts: &SolveOptions) -> Result<BoundaryData> {
    let (u, _) = solve_minimal_surface(space, h, opts)?;
    ng_of_solution(space, &u)
}

pub fn ng_of_solution(space: &Space, u: &ScalarField) -> Result<BoundaryData> {
    let b = space.boundary()?;
    let vals = (0..b.len())
        .map(|k| {
            let d = b.recovered_gradient(u.values(), k);
            let gi = b.metric[k].inverse();
            let nd = d[0] * b.normal[k][0] + d[1] * b.normal[k][1];
            nd / (1.0 + gi.form(d, d)).sqrt()
        })
        .collect();
    BoundaryData::new(space.mesh(), vals)
}

/// Result of reconstructing `Λ(h)` from areas of perturbed surfaces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AreaPipeline {
    pub data: AreaData,
    /// `d/dt Area(h + t w_i)` per boundary hat probe `w_i`.
    pub area_derivatives: Vec<f64>,
    pub trace: BoundaryData,
}

/// Reconstructs `Λ(h)` from area values only: central differences of
/// `Area(u_{h ± t w_i})` against boundary hat probes give `M N_g`, the
/// tangential term comes from the boundary metric and `Λ` from inverting
/// `N = Λ/√(1 + |τh|² + Λ²)`.
pub fn dn_from_area_data(space: &Space, h: &BoundaryData, t: f64, opts: &SolveOptions) -> Result<AreaPipeline> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("area step must be positive, got {t}")));
    }
    let (u, _) = solve_minimal_surface(space, h, opts)?;
    let a0 = area(space, &u)?;
    let n = h.len();
    let derivs = space.exec().try_map_range(n, |i| {
        let mut vals = [0.0; 2];
        for (slot, s) in [(0, t), (1, -t)] {
            let mut p = h.values().to_vec();
            p[i] += s;
            let f = BoundaryData::from_vec_unchecked(p);
            let (ui, _) = solve_minimal_surface_from(space, &f, &u, opts)?;
            vals[slot] = area(space, &ui)?;
        }
        Ok::<f64, Error>((vals[0] - vals[1]) / (2.0 * t))
    })?;
    let b = space.boundary()?;
    let ng = b.solve_mass(&derivs)?;
    let tangential = tangential_square(space, h)?;
    let lambda = invert(space, &ng, &tangential)?;
    Ok(AreaPipeline {
        data: AreaData {
            area: a0,
            ng: BoundaryData::new(space.mesh(), ng)?,
            tangential,
        },
        area_derivatives: derivs,
        trace: BoundaryData::new(space.mesh(), lambda)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inversion_round_trip() {
        for &n in &[-0.99, -0.5, 0.0, 0.3, 0.99] {
            for &t in &[0.0, 0.2, 3.0] {
                let l = lambda_from_ng(n, t).unwrap();
                assert!((ng_from_lambda(l, t) - n).abs() < 1e-14);
            }
        }
        assert!(lambda_from_ng(1.0, 0.0).is_none());
    }
}
