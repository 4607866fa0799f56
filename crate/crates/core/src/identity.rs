//! The third-order integral identity and the Q-weighted quartic functional.
//!
//! For harmonic `v_j, v_k, v_l, v_m` with traces `f_•` and `w` the third
//! linearization of the solution map in `(j, k, l)`, Green's formula gives
//!
//! ```text
//! -∫_∂ f_m ∂³Λ dS + ∫_∂ w ∂_ν v_m dS + ∫_∂ v_m ν·S dS = ∫_Σ g(∇v_m, S) dV
//! ```
//!
//! with `S = ∇v_j g(∇v_l,∇v_k) + ∇v_k g(∇v_l,∇v_j) + ∇v_l g(∇v_j,∇v_k)`.
//! All pairings are complex-bilinear.

use serde::{Deserialize, Serialize};

use crate::dnmap::{dn_third_derivative_fd, dn_third_from_fields};
use crate::error::{Error, Result};
use crate::field::{BoundaryData, Scalar, ScalarField};
use crate::forward::{solve_laplace_beltrami, SolveOptions};
use crate::geometry::{pair, QuadPoint, Space};
use crate::linearize::{cubic_covector, third_linearization_pde};
use crate::metric::ScalarFunction;
use crate::sparse::SplitComplex;

/// How `∂³Λ` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DnPath {
    /// Mixed central differences of the nonlinear DN map with step `h`.
    Fd { h: f64 },
    /// Weak flux of the third linearization.
    Exact,
}

/// A real weight on the chart, either analytic or piecewise linear.
#[derive(Debug, Clone)]
pub enum Coefficient {
    Function(ScalarFunction),
    Nodal(ScalarField),
}

impl Coefficient {
    #[inline]
    pub fn at(&self, space: &Space, t: usize, q: &QuadPoint) -> f64 {
        match self {
            Coefficient::Function(f) => f.eval(q.x),
            Coefficient::Nodal(v) => {
                let tri = space.triangles()[t].vertices;
                (0..3).map(|a| q.bary[a] * v[tri[a]]).sum()
            }
        }
    }

    /// `Q = 1 − 1/c`.
    pub fn from_conformal_factor(c: &ScalarFunction) -> Self {
        let c = c.clone();
        Coefficient::Function(ScalarFunction::new(format!("1 - 1/{}", c.name()), move |p| 1.0 - 1.0 / c.eval(p)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityTerms {
    /// `∫ f_m ∂³Λ dS`
    pub dn: f64,
    /// `∫ w ∂_ν v_m dS`
    pub w_flux: f64,
    /// `∫ v_m ν·S dS`
    pub cubic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub relative_residual: f64,
    pub mesh_size: f64,
    pub terms: IdentityTerms,
}

/// `∫ Q · g(∇v_m, S(v_j, v_k, v_l)) dV_g` for `v = [v_j, v_k, v_l, v_m]`.
pub fn q_functional<T: Scalar>(space: &Space, q: &Coefficient, v: [&ScalarField<T>; 4]) -> Result<T> {
    for f in v {
        space.check_len(f.values())?;
    }
    if let Coefficient::Nodal(c) = q {
        space.check_len(c.values())?;
    }
    Ok(weighted_volume(space, v, |t, qp| q.at(space, t, qp)))
}

fn weighted_volume<T: Scalar>(
    space: &Space,
    v: [&ScalarField<T>; 4],
    weight: impl Fn(usize, &QuadPoint) -> f64 + Sync + Send,
) -> T {
    space.integrate(|t, qp| {
        let w = weight(t, qp);
        if w == 0.0 {
            return T::zero();
        }
        let d = v.map(|f| space.covector(f.values(), t));
        pair(qp.ginv, d[3], cubic_covector(qp.ginv, d[0], d[1], d[2])) * w
    })
}

/// Harmonic fields, `w` and the four boundary-side quantities of the identity.
struct Sides<T> {
    dn: T,
    w_flux: T,
    cubic: T,
    volume: T,
}

impl<T: Scalar> Sides<T> {
    fn lhs(&self) -> T {
        -self.dn + self.w_flux + self.cubic
    }
}

fn sides<T: Scalar + SplitComplex>(
    space: &Space,
    f: [&BoundaryData<T>; 4],
    path: DnPath,
    opts: &SolveOptions,
) -> Result<Sides<T>> {
    let v = f
        .iter()
        .map(|fi| solve_laplace_beltrami(space, fi))
        .collect::<Result<Vec<_>>>()?;
    let w = third_linearization_pde(space, &v[0], &v[1], &v[2])?;
    let d3 = match path {
        DnPath::Exact => dn_third_from_fields(space, &v[0], &v[1], &v[2], &w)?,
        DnPath::Fd { h } => dn_third_derivative_fd(space, f[0], f[1], f[2], h, opts)?,
    };
    let b = space.boundary()?;
    let fm = f[3].values();
    let dn = b.pairing(fm, d3.values());

    let bv = space.mesh().boundary_vertices();
    let w_b: Vec<T> = bv.iter().map(|&i| w[i]).collect();
    let nd_m = b.recovered_normal_derivative(v[3].values());
    let w_flux = b.pairing(&w_b, &nd_m);

    let nu_s: Vec<T> = (0..b.len())
        .map(|k| {
            let gi = b.metric[k].inverse();
            let d: Vec<[T; 2]> = v[..3].iter().map(|x| b.recovered_gradient(x.values(), k)).collect();
            let s = cubic_covector(gi, d[0], d[1], d[2]);
            s[0] * b.normal[k][0] + s[1] * b.normal[k][1]
        })
        .collect();
    let cubic = b.pairing(fm, &nu_s);
    let volume = weighted_volume(space, [&v[0], &v[1], &v[2], &v[3]], |_, _| 1.0);
    Ok(Sides {
        dn,
        w_flux,
        cubic,
        volume,
    })
}

/// Evaluates both sides of the identity for data `f = [f_j, f_k, f_l, f_m]`.
pub fn integral_identity_check(
    space: &Space,
    f: [&BoundaryData; 4],
    path: DnPath,
    opts: &SolveOptions,
) -> Result<IdentityReport> {
    let s = sides(space, f, path, opts)?;
    let (lhs, rhs) = (s.lhs(), s.volume);
    let residual = (lhs - rhs).abs();
    let scale = lhs.abs().max(rhs.abs());
    Ok(IdentityReport {
        lhs,
        rhs,
        residual,
        relative_residual: if scale > 0.0 { residual / scale } else { 0.0 },
        mesh_size: space.mesh().mesh_size(),
        terms: IdentityTerms {
            dn: s.dn,
            w_flux: s.w_flux,
            cubic: s.cubic,
        },
    })
}

/// Builds the space of `c·g` and checks `c > 0` everywhere and `c = 1` on the boundary.
pub fn conformal_partner(space: &Space, c: &ScalarFunction) -> Result<Space> {
    for &p in space.mesh().vertices() {
        let v = c.eval(p);
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidConformalFactor { value: v, x: p[0], y: p[1] });
        }
    }
    for &i in space.mesh().boundary_vertices() {
        let p = space.mesh().vertices()[i];
        if (c.eval(p) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "conformal factor must equal 1 on the boundary, found {} at ({}, {})",
                c.eval(p),
                p[0],
                p[1]
            )));
        }
    }
    space.with_metric(space.metric().rescaled(c.clone())).map_err(|e| match e {
        Error::MetricDegenerate { x, y } => Error::InvalidConformalFactor {
            value: c.eval([x, y]),
            x,
            y,
        },
        e => e,
    })
}

/// `LHS(g) − LHS(c·g)` from boundary and DN quantities alone.
pub fn dn_difference_functional<T: Scalar + SplitComplex>(
    space: &Space,
    c: &ScalarFunction,
    f: [&BoundaryData<T>; 4],
    path: DnPath,
    opts: &SolveOptions,
) -> Result<T> {
    let partner = conformal_partner(space, c)?;
    let a = sides(space, f, path, opts)?;
    let b = sides(&partner, f, path, opts)?;
    Ok(a.lhs() - b.lhs())
}

/// Volume side `∫ g(∇v_m, S) dV_g` alone.
pub fn volume_term<T: Scalar>(space: &Space, v: [&ScalarField<T>; 4]) -> Result<T> {
    for f in v {
        space.check_len(f.values())?;
    }
    Ok(weighted_volume(space, v, |_, _| 1.0))
}
