//! Finite-dimensional metric spaces.
//!
//! State, input, and parameter spaces are all `R^d` carrying a p-norm metric
//! (1 <= p <= infinity). A [`SpaceDescriptor`] records the dimension and the
//! norm order and evaluates distances; everything downstream (moduli checks,
//! coercivity radii, minimiser gaps) measures through it so that the metric
//! is fixed in exactly one place.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::Error;

/// Norm order for a p-norm metric on `R^d`.
///
/// Serialises as a plain number, or the string `"infinity"` for the sup norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormOrder {
    P(f64),
    Infinity,
}

impl Serialize for NormOrder {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            NormOrder::P(p) => ser.serialize_f64(*p),
            NormOrder::Infinity => ser.serialize_str("infinity"),
        }
    }
}

impl<'de> Deserialize<'de> for NormOrder {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(de)? {
            Repr::Num(p) => Ok(NormOrder::P(p)),
            Repr::Text(s) if s == "infinity" => Ok(NormOrder::Infinity),
            Repr::Text(s) => Err(serde::de::Error::custom(format!(
                "unknown norm order {s:?}, expected a number or \"infinity\""
            ))),
        }
    }
}

/// A finite-dimensional metric space `(R^d, ||.||_p)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceDescriptor {
    dimension: usize,
    norm: NormOrder,
}

impl SpaceDescriptor {
    /// Euclidean space of the given dimension.
    pub fn euclidean(dimension: usize) -> Result<Self> {
        Self::new(dimension, NormOrder::P(2.0))
    }

    pub fn new(dimension: usize, norm: NormOrder) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::input("space dimension must be at least 1"));
        }
        if let NormOrder::P(p) = norm {
            if !(p >= 1.0) || !p.is_finite() {
                return Err(Error::input(format!(
                    "norm order must satisfy p >= 1, got {p}"
                )));
            }
        }
        Ok(SpaceDescriptor { dimension, norm })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn norm_order(&self) -> NormOrder {
        self.norm
    }

    /// Norm of a vector of matching dimension.
    pub fn norm(&self, v: &[f64]) -> Result<f64> {
        check_dim("vector", v.len(), self.dimension)?;
        Ok(match self.norm {
            NormOrder::Infinity => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            NormOrder::P(p) if p == 1.0 => v.iter().map(|x| x.abs()).sum(),
            NormOrder::P(p) if p == 2.0 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormOrder::P(p) => v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p),
        })
    }

    /// Distance `||a - b||_p`.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        check_dim("left point", a.len(), self.dimension)?;
        check_dim("right point", b.len(), self.dimension)?;
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.norm(&diff)
    }
}
