//! Weight functions `f` of the quadratic-variation statistic.
//!
//! The built-in weights are smooth with polynomially bounded derivatives,
//! which is what the limit theorem requires of `f`. Tabulated weights are
//! piecewise linear and do not qualify; they are accepted for exploration
//! only.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::quadrature::gaussian_expectation;

/// Interval covered by tabulated weights; values are clamped outside.
pub const TABLE_RANGE: (f64, f64) = (-8.0, 8.0);

/// Piecewise-linear weight on a uniform grid over [`TABLE_RANGE`].
#[derive(Debug, Clone, PartialEq)]
pub struct UserTable {
    values: Vec<f64>,
}

impl UserTable {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(
                "a weight table needs at least two finite values".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (lo, hi) = TABLE_RANGE;
        let last = self.values.len() - 1;
        let pos = (x.clamp(lo, hi) - lo) / (hi - lo) * last as f64;
        let k = (pos.floor() as usize).min(last - 1);
        let frac = pos - k as f64;
        self.values[k] * (1.0 - frac) + self.values[k + 1] * frac
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightFunction {
    /// `f = 1`
    ConstantOne,
    /// `f(x) = x`
    Identity,
    /// `f(x) = x^2`
    Square,
    /// `f(x) = cos x`
    Cosine,
    UserTable(UserTable),
}

impl WeightFunction {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ConstantOne => "constant_one",
            Self::Identity => "identity",
            Self::Square => "square",
            Self::Cosine => "cosine",
            Self::UserTable(_) => "user_table",
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::ConstantOne => 1.0,
            Self::Identity => x,
            Self::Square => x * x,
            Self::Cosine => x.cos(),
            Self::UserTable(t) => t.eval(x),
        }
    }

    /// `f''(x)` where it exists.
    pub fn second_derivative(&self, x: f64) -> Option<f64> {
        match self {
            Self::ConstantOne | Self::Identity => Some(0.0),
            Self::Square => Some(2.0),
            Self::Cosine => Some(-x.cos()),
            Self::UserTable(_) => None,
        }
    }

    /// Whether the weight is smooth enough for the limit theorem.
    pub fn satisfies_smoothness(&self) -> bool {
        !matches!(self, Self::UserTable(_))
    }

    /// True when `f'' = 0` identically.
    pub fn is_affine(&self) -> bool {
        matches!(self, Self::ConstantOne | Self::Identity)
    }

    /// `m(v) = E[f(X)^2]`, `X ~ N(0, v)`, in closed form when known.
    pub fn square_mean_closed_form(&self, v: f64) -> Option<f64> {
        match self {
            Self::ConstantOne => Some(1.0),
            Self::Identity => Some(v),
            Self::Square => Some(3.0 * v * v),
            Self::Cosine => Some(0.5 * (1.0 + (-2.0 * v).exp())),
            Self::UserTable(_) => None,
        }
    }

    /// `m(v) = E[f(X)^2]`; closed form or Gauss–Hermite quadrature.
    pub fn square_mean(&self, v: f64) -> f64 {
        self.square_mean_closed_form(v).unwrap_or_else(|| {
            gaussian_expectation(v, |x| {
                let f = self.eval(x);
                f * f
            })
        })
    }

    /// `E[f''(X)]`, `X ~ N(0, v)`.
    pub fn second_derivative_mean(&self, v: f64) -> Result<f64> {
        match self {
            Self::ConstantOne | Self::Identity => Ok(0.0),
            Self::Square => Ok(2.0),
            Self::Cosine => Ok(-(-0.5 * v).exp()),
            Self::UserTable(_) => Err(Error::NoSecondDerivative(self.name().into())),
        }
    }

    /// `sup_{v >= 0} |E[f''(N(0, v))]|`.
    pub fn second_derivative_mean_bound(&self) -> Result<f64> {
        match self {
            Self::ConstantOne | Self::Identity => Ok(0.0),
            Self::Square => Ok(2.0),
            Self::Cosine => Ok(1.0),
            Self::UserTable(_) => Err(Error::NoSecondDerivative(self.name().into())),
        }
    }
}

impl fmt::Display for WeightFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeightFunction {
    type Err = Error;

    /// Built-in names, or `table:v0,v1,...` for a tabulated weight.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant_one" | "one" => Ok(Self::ConstantOne),
            "identity" => Ok(Self::Identity),
            "square" => Ok(Self::Square),
            "cosine" | "cos" => Ok(Self::Cosine),
            other => {
                if let Some(list) = other.strip_prefix("table:") {
                    let values = list
                        .split(',')
                        .map(|v| {
                            v.trim()
                                .parse::<f64>()
                                .map_err(|e| Error::Invalid(format!("weight table entry {v:?}: {e}")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(Self::UserTable(UserTable::new(values)?))
                } else {
                    Err(Error::Invalid(format!("unknown weight {other:?}")))
                }
            }
        }
    }
}

impl Serialize for WeightFunction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const BUILTINS: [WeightFunction; 4] = [
        WeightFunction::ConstantOne,
        WeightFunction::Identity,
        WeightFunction::Square,
        WeightFunction::Cosine,
    ];

    #[test]
    fn closed_forms_match_quadrature() {
        for f in BUILTINS {
            for k in 0..=20 {
                let v = k as f64 / 20.0;
                let closed = f.square_mean_closed_form(v).unwrap();
                let quad = gaussian_expectation(v, |x| f.eval(x).powi(2));
                assert!((closed - quad).abs() <= 1e-8, "{f} v={v}");
                let d2 = f.second_derivative_mean(v).unwrap();
                let d2_quad = gaussian_expectation(v, |x| f.second_derivative(x).unwrap());
                assert!((d2 - d2_quad).abs() <= 1e-8, "{f} v={v}");
                assert!(d2.abs() <= f.second_derivative_mean_bound().unwrap());
            }
        }
    }

    #[test]
    fn table_interpolates_and_clamps() {
        let t = UserTable::new(vec![0.0, 1.0, 4.0]).unwrap();
        assert_eq!(t.eval(-8.0), 0.0);
        assert_eq!(t.eval(0.0), 1.0);
        assert_relative_eq!(t.eval(4.0), 2.5);
        assert_eq!(t.eval(100.0), 4.0);
        assert_eq!(t.eval(-100.0), 0.0);
        let f = WeightFunction::UserTable(t);
        assert!(!f.satisfies_smoothness());
        assert!(f.second_derivative_mean(0.5).is_err());
        assert_relative_eq!(
            f.square_mean(0.0),
            1.0,
            epsilon = 1e-12
        );
        assert!(UserTable::new(vec![1.0]).is_err());
    }

    #[test]
    fn parse_names() {
        assert_eq!("square".parse::<WeightFunction>().unwrap(), WeightFunction::Square);
        assert_eq!("cos".parse::<WeightFunction>().unwrap(), WeightFunction::Cosine);
        let t: WeightFunction = "table:1,2,3".parse().unwrap();
        assert_eq!(t.name(), "user_table");
        assert!("cubic".parse::<WeightFunction>().is_err());
        assert!("table:1,x".parse::<WeightFunction>().is_err());
    }
}
