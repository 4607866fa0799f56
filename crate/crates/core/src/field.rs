use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point};

/// Real or complex nodal value. Pairings built on top of this are bilinear,
/// never Hermitian: `a * b` is used as-is, without conjugation.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + std::fmt::Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + Mul<f64, Output = Self>
    + 'static
{
    fn zero() -> Self;
    fn from_real(x: f64) -> Self;
    fn is_finite(self) -> bool;
    fn modulus(self) -> f64;
    fn re(self) -> f64;
    fn im(self) -> f64;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn re(self) -> f64 {
        self
    }
    fn im(self) -> f64 {
        0.0
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn is_finite(self) -> bool {
        Complex64::is_finite(self)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn re(self) -> f64 {
        self.re
    }
    fn im(self) -> f64 {
        self.im
    }
}

/// One value per mesh vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField<T = f64> {
    values: Vec<T>,
}

impl<T: Scalar> ScalarField<T> {
    pub fn new(mesh: &Mesh, values: Vec<T>) -> Result<Self> {
        if values.len() != mesh.num_vertices() {
            return Err(Error::LengthMismatch {
                expected: mesh.num_vertices(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { values })
    }

    pub(crate) fn from_vec_unchecked(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn zeros(mesh: &Mesh) -> Self {
        Self {
            values: vec![T::zero(); mesh.num_vertices()],
        }
    }

    pub fn from_fn(mesh: &Mesh, f: impl Fn(Point) -> T) -> Self {
        Self {
            values: mesh.vertices().iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.modulus()))
    }

    /// Values at the mesh boundary vertices, in [`Mesh::boundary_vertices`] order.
    pub fn boundary_trace(&self, mesh: &Mesh) -> BoundaryData<T> {
        BoundaryData {
            values: mesh.boundary_vertices().iter().map(|&i| self.values[i]).collect(),
        }
    }
}

impl<T> std::ops::Index<usize> for ScalarField<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.values[i]
    }
}

/// A function on the boundary vertices, stored in [`Mesh::boundary_vertices`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData<T = f64> {
    values: Vec<T>,
}

impl<T: Scalar> BoundaryData<T> {
    pub fn new(mesh: &Mesh, values: Vec<T>) -> Result<Self> {
        let n = mesh.boundary_vertices().len();
        if values.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { values })
    }

    pub(crate) fn from_vec_unchecked(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn zeros(mesh: &Mesh) -> Self {
        Self {
            values: vec![T::zero(); mesh.boundary_vertices().len()],
        }
    }

    pub fn from_fn(mesh: &Mesh, f: impl Fn(Point) -> T) -> Self {
        Self {
            values: mesh
                .boundary_vertices()
                .iter()
                .map(|&i| f(mesh.vertices()[i]))
                .collect(),
        }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.modulus()))
    }

    /// `Σ coeffs[i] · data[i]`, the boundary data `f_ε` of an ε-combination.
    pub fn combination(data: &[&BoundaryData<T>], coeffs: &[f64]) -> Self {
        assert_eq!(data.len(), coeffs.len());
        let n = data.first().map_or(0, |d| d.len());
        let mut values = vec![T::zero(); n];
        for (d, &c) in data.iter().zip(coeffs) {
            if c == 0.0 {
                continue;
            }
            for (acc, &v) in values.iter_mut().zip(&d.values) {
                *acc += v * c;
            }
        }
        Self { values }
    }
}

impl BoundaryData<Complex64> {
    pub fn real_part(&self) -> BoundaryData<f64> {
        BoundaryData {
            values: self.values.iter().map(|v| v.re).collect(),
        }
    }

    pub fn imag_part(&self) -> BoundaryData<f64> {
        BoundaryData {
            values: self.values.iter().map(|v| v.im).collect(),
        }
    }
}
