//! Scalar traits and the extended-real log value.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::Add;

use num_traits::{Float, FromPrimitive, NumCast};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Floating point scalar: f32 or f64.
pub trait Real: Float + FromPrimitive + NumCast + fmt::Debug + Default + Send + Sync + 'static {
    fn lit(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("literal representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// A real number or −∞, used for logarithms of nonnegative quantities.
///
/// `NegInf` is the log of an exact zero. Finite values are never `-inf`
/// or NaN.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtReal<T> {
    NegInf,
    Finite(T),
}

impl<T: Real> ExtReal<T> {
    pub const fn zero_mass() -> Self {
        ExtReal::NegInf
    }

    /// Log of a nonnegative value; zero maps to `NegInf`.
    pub fn ln_of(x: T) -> Self {
        debug_assert!(x >= T::zero(), "log of negative value");
        if x == T::zero() {
            ExtReal::NegInf
        } else {
            ExtReal::Finite(x.ln())
        }
    }

    pub fn from_log(v: T) -> Self {
        if v == T::neg_infinity() {
            ExtReal::NegInf
        } else {
            ExtReal::Finite(v)
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(&self) -> Option<T> {
        match *self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::NegInf => None,
        }
    }

    /// Value as a float, with `NegInf` mapped to `-inf`.
    pub fn to_float(&self) -> T {
        self.finite().unwrap_or_else(T::neg_infinity)
    }

    pub fn exp(&self) -> T {
        match *self {
            ExtReal::Finite(v) => v.exp(),
            ExtReal::NegInf => T::zero(),
        }
    }
}

impl<T: Real> Add for ExtReal<T> {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        match (self, rhs) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => ExtReal::Finite(a + b),
            _ => ExtReal::NegInf,
        }
    }
}

impl<T: Real> Sum for ExtReal<T> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ExtReal::Finite(T::zero()), |a, b| a + b)
    }
}

impl<T: Real> PartialOrd for ExtReal<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (ExtReal::NegInf, ExtReal::NegInf) => Some(Ordering::Equal),
            (ExtReal::NegInf, _) => Some(Ordering::Less),
            (_, ExtReal::NegInf) => Some(Ordering::Greater),
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.partial_cmp(b),
        }
    }
}

impl<T: Real + fmt::Display> fmt::Display for ExtReal<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::NegInf => f.write_str("-inf"),
            ExtReal::Finite(v) => fmt::Display::fmt(v, f),
        }
    }
}

impl<T: Real + Serialize> Serialize for ExtReal<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ExtReal::NegInf => s.serialize_str("-inf"),
            ExtReal::Finite(v) => v.serialize(s),
        }
    }
}

impl<'de, T: Real + Deserialize<'de>> Deserialize<'de> for ExtReal<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr<T> {
            Num(T),
            Text(String),
        }
        match Repr::<T>::deserialize(d)? {
            Repr::Num(v) => Ok(ExtReal::Finite(v)),
            Repr::Text(s) if s == "-inf" => Ok(ExtReal::NegInf),
            Repr::Text(s) => Err(serde::de::Error::custom(format!("expected number or \"-inf\", got {s:?}"))),
        }
    }
}

/// Streaming log-sum-exp: keeps the running maximum and a sum rescaled to it.
#[derive(Clone, Copy, Debug)]
pub struct LogSumExp<T> {
    max: T,
    scaled: T,
}

impl<T: Real> Default for LogSumExp<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> LogSumExp<T> {
    pub fn new() -> Self {
        LogSumExp {
            max: T::neg_infinity(),
            scaled: T::zero(),
        }
    }

    /// Adds `exp(x)`; `x` must be finite.
    #[inline]
    pub fn push(&mut self, x: T) {
        if x <= self.max {
            self.scaled = self.scaled + (x - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - x).exp() + T::one();
            self.max = x;
        }
    }

    pub fn push_ext(&mut self, x: ExtReal<T>) {
        if let ExtReal::Finite(v) = x {
            self.push(v);
        }
    }

    pub fn merge(&mut self, other: &Self) {
        if other.scaled == T::zero() {
            return;
        }
        if self.scaled == T::zero() {
            *self = *other;
            return;
        }
        if other.max <= self.max {
            self.scaled = self.scaled + other.scaled * (other.max - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - other.max).exp() + other.scaled;
            self.max = other.max;
        }
    }

    pub fn value(&self) -> ExtReal<T> {
        if self.scaled == T::zero() {
            ExtReal::NegInf
        } else {
            ExtReal::Finite(self.max + self.scaled.ln())
        }
    }
}

/// Serde adapter writing non-finite floats as strings ("-inf", "inf", "nan").
pub mod json_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(s) => match s.as_str() {
                "-inf" => Ok(f64::NEG_INFINITY),
                "inf" => Ok(f64::INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(serde::de::Error::custom(format!("bad float {s:?}"))),
            },
        }
    }
}

/// Newtype around f64 whose JSON form tolerates non-finite values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JsonF64(#[serde(with = "json_float")] pub f64);
