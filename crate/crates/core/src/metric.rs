//! Riemannian metrics on a planar chart.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Point;

/// Symmetric 2x2 matrix `[[a11, a12], [a12, a22]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sym2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 { a11: 1.0, a12: 0.0, a22: 1.0 };

    pub fn new(a11: f64, a12: f64, a22: f64) -> Self {
        Self { a11, a12, a22 }
    }

    pub fn scaled(self, s: f64) -> Self {
        Self::new(s * self.a11, s * self.a12, s * self.a22)
    }

    pub fn det(self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a12
    }

    pub fn is_spd(self) -> bool {
        self.a11 > 0.0 && self.det() > 0.0 && self.a11.is_finite() && self.a22.is_finite()
    }

    pub fn inverse(self) -> Self {
        let d = self.det();
        Self::new(self.a22 / d, -self.a12 / d, self.a11 / d)
    }

    pub fn apply(self, v: [f64; 2]) -> [f64; 2] {
        [self.a11 * v[0] + self.a12 * v[1], self.a12 * v[0] + self.a22 * v[1]]
    }

    /// Bilinear form `a^T S b` for real vectors.
    pub fn form(self, a: [f64; 2], b: [f64; 2]) -> f64 {
        a[0] * (self.a11 * b[0] + self.a12 * b[1]) + a[1] * (self.a12 * b[0] + self.a22 * b[1])
    }
}

/// A named real function on the chart.
#[derive(Clone)]
pub struct ScalarFunction {
    name: String,
    f: Arc<dyn Fn(Point) -> f64 + Send + Sync>,
}

impl ScalarFunction {
    pub fn new(name: impl Into<String>, f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("const({c})"), move |_| c)
    }

    pub fn eval(&self, p: Point) -> f64 {
        (self.f)(p)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Debug for ScalarFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarFunction({})", self.name)
    }
}

type EntryFn = Arc<dyn Fn(Point) -> Sym2 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Flat,
    Explicit { name: String, entries: EntryFn },
    Conformal { base: Box<MetricField>, factor: ScalarFunction },
}

/// A smooth SPD metric `g(x)` on the chart.
#[derive(Clone)]
pub struct MetricField {
    kind: Kind,
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::Flat => write!(f, "MetricField::Flat"),
            Kind::Explicit { name, .. } => write!(f, "MetricField::Explicit({name})"),
            Kind::Conformal { base, factor } => write!(f, "MetricField::Conformal({} * {:?})", factor.name(), base),
        }
    }
}

impl MetricField {
    pub fn flat() -> Self {
        Self { kind: Kind::Flat }
    }

    /// Metric given pointwise by its entries `(g11, g12, g22)`.
    pub fn explicit(name: impl Into<String>, entries: impl Fn(Point) -> Sym2 + Send + Sync + 'static) -> Self {
        Self {
            kind: Kind::Explicit {
                name: name.into(),
                entries: Arc::new(entries),
            },
        }
    }

    pub fn constant(g: Sym2) -> Self {
        Self::explicit(format!("const({}, {}, {})", g.a11, g.a12, g.a22), move |_| g)
    }

    /// `c(x) * base(x)`.
    pub fn conformal(base: MetricField, factor: ScalarFunction) -> Self {
        Self {
            kind: Kind::Conformal {
                base: Box::new(base),
                factor,
            },
        }
    }

    /// `c(x) * self`.
    pub fn rescaled(&self, factor: ScalarFunction) -> Self {
        Self::conformal(self.clone(), factor)
    }

    fn raw(&self, p: Point) -> Sym2 {
        match &self.kind {
            Kind::Flat => Sym2::IDENTITY,
            Kind::Explicit { entries, .. } => entries(p),
            Kind::Conformal { base, factor } => base.raw(p).scaled(factor.eval(p)),
        }
    }

    pub fn eval(&self, p: Point) -> Result<Sym2> {
        let g = self.raw(p);
        if g.is_spd() {
            Ok(g)
        } else {
            Err(Error::MetricDegenerate { x: p[0], y: p[1] })
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.kind, Kind::Flat)
    }

    /// Whether the metric is a scalar multiple of the Euclidean one, i.e. the chart
    /// coordinates are isothermal. Explicit metrics are probed at `p`.
    pub fn is_isothermal_at(&self, p: Point) -> bool {
        match &self.kind {
            Kind::Flat => true,
            Kind::Conformal { base, .. } => base.is_isothermal_at(p),
            Kind::Explicit { entries, .. } => {
                let g = entries(p);
                g.a12.abs() <= 1e-14 * g.a11.abs() && (g.a11 - g.a22).abs() <= 1e-14 * g.a11.abs()
            }
        }
    }

    /// The conformal factor `γ(p)` of an isothermal metric `γ (dx² + dy²)`.
    pub fn isothermal_factor(&self, p: Point) -> Result<f64> {
        if !self.is_isothermal_at(p) {
            return Err(Error::InvalidArgument("metric is not isothermal in the chart coordinates".into()));
        }
        Ok(self.eval(p)?.a11)
    }

    /// The factor `c` if this metric was built with [`MetricField::conformal`].
    pub fn conformal_factor(&self) -> Option<&ScalarFunction> {
        match &self.kind {
            Kind::Conformal { factor, .. } => Some(factor),
            _ => None,
        }
    }

    pub fn describe(&self) -> String {
        format!("{self:?}")
    }
}
