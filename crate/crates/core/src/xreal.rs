//! Extended reals `(-inf, +inf]` used for log-MGF and rate-function values.
//!
//! Only `+inf` is representable. Arithmetic follows the usual extended-real
//! conventions (`c + inf = inf`, `a * inf = inf` for `a > 0`) and `inf - inf`
//! panics instead of producing a NaN.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::XRealError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XReal {
    Finite(f64),
    PosInfinity,
}

pub use XReal::PosInfinity;

impl XReal {
    pub const ZERO: XReal = XReal::Finite(0.0);

    /// Wraps a float; `+inf` maps to `PosInfinity`. NaN and `-inf` are rejected.
    pub fn new(v: f64) -> Result<Self, XRealError> {
        if v.is_nan() {
            Err(XRealError::NotANumber)
        } else if v == f64::NEG_INFINITY {
            Err(XRealError::NegativeInfinity)
        } else if v == f64::INFINITY {
            Ok(PosInfinity)
        } else {
            Ok(XReal::Finite(v))
        }
    }

    /// Like [`XReal::new`] but panics on NaN or `-inf`.
    pub fn from_f64(v: f64) -> Self {
        Self::new(v).unwrap_or_else(|e| panic!("invalid extended real {v}: {e}"))
    }

    pub fn is_finite(self) -> bool {
        matches!(self, XReal::Finite(_))
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, PosInfinity)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            XReal::Finite(v) => Some(v),
            PosInfinity => None,
        }
    }

    /// The value as an `f64`, with `PosInfinity` mapped to `f64::INFINITY`.
    pub fn to_f64(self) -> f64 {
        match self {
            XReal::Finite(v) => v,
            PosInfinity => f64::INFINITY,
        }
    }

    pub fn checked_sub(self, rhs: XReal) -> Result<XReal, XRealError> {
        match (self, rhs) {
            (PosInfinity, PosInfinity) => Err(XRealError::InfMinusInf),
            (PosInfinity, XReal::Finite(_)) => Ok(PosInfinity),
            (XReal::Finite(_), PosInfinity) => Err(XRealError::NegativeInfinity),
            (XReal::Finite(a), XReal::Finite(b)) => XReal::new(a - b),
        }
    }

    /// Multiplication by a nonnegative scalar with `0 * inf = 0`.
    pub fn scale(self, a: f64) -> Result<XReal, XRealError> {
        if a.is_nan() || a < 0.0 {
            return Err(XRealError::NegativeScale(a));
        }
        match self {
            XReal::Finite(v) => XReal::new(a * v),
            PosInfinity if a == 0.0 => Ok(XReal::ZERO),
            PosInfinity => Ok(PosInfinity),
        }
    }

    pub fn min(self, other: XReal) -> XReal {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: XReal) -> XReal {
        if self >= other {
            self
        } else {
            other
        }
    }
}

impl PartialOrd for XReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (PosInfinity, PosInfinity) => Some(Ordering::Equal),
            (PosInfinity, XReal::Finite(_)) => Some(Ordering::Greater),
            (XReal::Finite(_), PosInfinity) => Some(Ordering::Less),
            (XReal::Finite(a), XReal::Finite(b)) => a.partial_cmp(b),
        }
    }
}

impl Add for XReal {
    type Output = XReal;
    fn add(self, rhs: XReal) -> XReal {
        match (self, rhs) {
            (XReal::Finite(a), XReal::Finite(b)) => XReal::from_f64(a + b),
            _ => PosInfinity,
        }
    }
}

impl Add<f64> for XReal {
    type Output = XReal;
    fn add(self, rhs: f64) -> XReal {
        self + XReal::from_f64(rhs)
    }
}

impl Sub for XReal {
    type Output = XReal;
    /// Panics on `inf - inf` and on `c - inf`.
    fn sub(self, rhs: XReal) -> XReal {
        self.checked_sub(rhs)
            .unwrap_or_else(|e| panic!("extended-real subtraction {self} - {rhs}: {e}"))
    }
}

impl From<f64> for XReal {
    fn from(v: f64) -> Self {
        XReal::from_f64(v)
    }
}

impl fmt::Display for XReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            XReal::Finite(v) => write!(f, "{v}"),
            PosInfinity => write!(f, "inf"),
        }
    }
}

impl Serialize for XReal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            XReal::Finite(v) => s.serialize_f64(*v),
            PosInfinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for XReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => XReal::new(v).map_err(serde::de::Error::custom),
            Repr::Str(s) if s == "inf" || s == "+inf" => Ok(PosInfinity),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("not an extended real: {s}"))),
        }
    }
}
