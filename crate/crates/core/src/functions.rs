//! A small fixed library of named analytic functions, addressable from JSON.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Point;
use crate::metric::ScalarFunction;

fn default_power() -> i32 {
    4
}

fn origin() -> Point {
    [0.0, 0.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    Constant {
        value: f64,
    },
    /// `a + b x + c y`
    Affine {
        a: f64,
        b: f64,
        c: f64,
    },
    /// `scale · Re (z − center)^n`
    ReZn {
        n: u32,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default = "origin")]
        center: Point,
    },
    /// `scale · Im (z − center)^n`
    ImZn {
        n: u32,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default = "origin")]
        center: Point,
    },
    /// `a · arccosh(|x| / a)`, the catenoid profile.
    Catenoid {
        a: f64,
    },
    /// `amplitude · sin(kx x + ky y + phase)`
    Sine {
        amplitude: f64,
        kx: f64,
        ky: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `amplitude · (1 − |x − center|²/radius²)^power` inside the disc, 0 outside.
    Bump {
        amplitude: f64,
        center: Point,
        radius: f64,
        #[serde(default = "default_power")]
        power: i32,
    },
    /// `amplitude · exp(−|x − center|² / width)`
    Gaussian {
        amplitude: f64,
        center: Point,
        width: f64,
    },
    /// The coordinate `x` (axis 0) or `y` (axis 1).
    Coordinate {
        axis: usize,
    },
    Sum {
        terms: Vec<FunctionSpec>,
    },
    Product {
        factors: Vec<FunctionSpec>,
    },
    /// `1 / (1 − Q)`: the conformal factor whose discrepancy `1 − 1/c` equals `Q`.
    ConformalFromQ {
        q: Box<FunctionSpec>,
    },
}

fn one() -> f64 {
    1.0
}

fn zpow(p: Point, center: Point, n: u32) -> num_complex::Complex64 {
    num_complex::Complex64::new(p[0] - center[0], p[1] - center[1]).powu(n)
}

impl FunctionSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            FunctionSpec::Catenoid { a } if *a <= 0.0 => Err(Error::InvalidArgument("catenoid.a must be positive".into())),
            FunctionSpec::Bump { radius, .. } if *radius <= 0.0 => {
                Err(Error::InvalidArgument("bump.radius must be positive".into()))
            }
            FunctionSpec::Gaussian { width, .. } if *width <= 0.0 => {
                Err(Error::InvalidArgument("gaussian.width must be positive".into()))
            }
            FunctionSpec::Coordinate { axis } if *axis > 1 => {
                Err(Error::InvalidArgument("coordinate.axis must be 0 or 1".into()))
            }
            FunctionSpec::Sum { terms: fs } | FunctionSpec::Product { factors: fs } => {
                fs.iter().try_for_each(|f| f.validate())
            }
            FunctionSpec::ConformalFromQ { q } => q.validate(),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, p: Point) -> f64 {
        match self {
            FunctionSpec::Constant { value } => *value,
            FunctionSpec::Affine { a, b, c } => a + b * p[0] + c * p[1],
            FunctionSpec::ReZn { n, scale, center } => scale * zpow(p, *center, *n).re,
            FunctionSpec::ImZn { n, scale, center } => scale * zpow(p, *center, *n).im,
            FunctionSpec::Catenoid { a } => a * ((p[0] * p[0] + p[1] * p[1]).sqrt() / a).acosh(),
            FunctionSpec::Sine {
                amplitude,
                kx,
                ky,
                phase,
            } => amplitude * (kx * p[0] + ky * p[1] + phase).sin(),
            FunctionSpec::Bump {
                amplitude,
                center,
                radius,
                power,
            } => {
                let r2 = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)) / (radius * radius);
                if r2 < 1.0 {
                    amplitude * (1.0 - r2).powi(*power)
                } else {
                    0.0
                }
            }
            FunctionSpec::Gaussian {
                amplitude,
                center,
                width,
            } => amplitude * (-((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)) / width).exp(),
            FunctionSpec::Coordinate { axis } => p[*axis],
            FunctionSpec::Sum { terms } => terms.iter().map(|f| f.eval(p)).sum(),
            FunctionSpec::Product { factors } => factors.iter().map(|f| f.eval(p)).product(),
            FunctionSpec::ConformalFromQ { q } => 1.0 / (1.0 - q.eval(p)),
        }
    }

    pub fn label(&self) -> String {
        serde_json::to_string(self).unwrap_or_else(|_| "function".into())
    }

    pub fn to_function(&self) -> ScalarFunction {
        let me = self.clone();
        ScalarFunction::new(self.label(), move |p| me.eval(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_evaluates() {
        let f: FunctionSpec = serde_json::from_str(r#"{"name": "re_zn", "n": 2}"#).unwrap();
        assert_eq!(f.eval([2.0, 1.0]), 3.0);
        let c: FunctionSpec =
            serde_json::from_str(r#"{"name": "conformal_from_q", "q": {"name": "constant", "value": 0.5}}"#).unwrap();
        assert_eq!(c.eval([0.0, 0.0]), 2.0);
        let b = FunctionSpec::Bump {
            amplitude: 0.1,
            center: [0.0, 0.0],
            radius: 0.5,
            power: 4,
        };
        assert_eq!(b.eval([0.0, 0.0]), 0.1);
        assert_eq!(b.eval([0.6, 0.0]), 0.0);
    }

    #[test]
    fn unknown_keys_are_named() {
        let e = serde_json::from_str::<FunctionSpec>(r#"{"name": "affine", "a": 1, "b": 2, "c": 3, "d": 4}"#)
            .unwrap_err()
            .to_string();
        assert!(e.contains("`d`"), "{e}");
    }
}
