//! Minimal surface equation on two-dimensional Riemannian charts.
//!
//! Forward solver, higher-order linearizations of the solution map,
//! Dirichlet-to-Neumann traces, the third-order integral identity and
//! probe-based recovery of a conformal factor discrepancy.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dnmap;
pub mod error;
pub mod experiments;
pub mod field;
pub mod forward;
pub mod functions;
pub mod identity;
pub mod geometry;
pub mod inverse;
pub mod linearize;
pub mod mesh;
pub mod metric;
pub mod par;
pub mod sparse;

pub use error::{Error, Result};
pub use field::{BoundaryData, Scalar, ScalarField};
pub use geometry::{BoundaryGeometry, Space};
pub use mesh::{Mesh, Point};
pub use metric::{MetricField, ScalarFunction, Sym2};
pub use num_complex::Complex64;
pub use par::Exec;
