//! Scalar modes: exact rationals and 64-bit floats.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use num_integer::Roots;
use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Rational,
    Float,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Rational => "rational",
            Mode::Float => "float",
        }
    }
}

/// A numeric literal: its exact decimal value when it fits, and its float value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Literal {
    pub exact: Option<(i128, i128)>,
    pub approx: f64,
}

impl Literal {
    pub fn integer(v: i64) -> Self {
        Literal {
            exact: Some((v as i128, 1)),
            approx: v as f64,
        }
    }

    pub fn ratio(num: i128, den: i128) -> Self {
        let r = Ratio::new(num, den);
        Literal {
            exact: Some((*r.numer(), *r.denom())),
            approx: num as f64 / den as f64,
        }
    }

    pub fn float(v: f64) -> Self {
        Literal {
            exact: None,
            approx: v,
        }
    }

    /// Parse a decimal literal such as `12`, `0.25`, `3e-2`.
    pub fn parse_decimal(text: &str) -> Option<Self> {
        let approx: f64 = text.parse().ok()?;
        Some(Literal {
            exact: exact_decimal(text),
            approx,
        })
    }

    /// Exact value of the shortest decimal that round-trips to `v`.
    pub fn from_f64_decimal(v: f64) -> Self {
        Literal {
            exact: if v.is_finite() {
                exact_decimal(&format!("{v:e}"))
            } else {
                None
            },
            approx: v,
        }
    }

    pub fn is_integer(&self) -> Option<i64> {
        match self.exact {
            Some((n, 1)) => i64::try_from(n).ok(),
            _ => None,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.exact {
            Some((n, 1)) => write!(f, "{n}"),
            Some((n, d)) => {
                let s = format!("{}", self.approx);
                if exact_decimal(&s) == Some((n, d)) {
                    write!(f, "{s}")
                } else {
                    write!(f, "{n}/{d}")
                }
            }
            None => {
                let s = format!("{:?}", self.approx);
                write!(f, "{s}")
            }
        }
    }
}

fn exact_decimal(text: &str) -> Option<(i128, i128)> {
    let (mantissa, exp) = match text.find(['e', 'E']) {
        Some(i) => (&text[..i], text[i + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mantissa),
    };
    let (int_part, frac_part) = match mantissa.find('.') {
        Some(i) => (&mantissa[..i], &mantissa[i + 1..]),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let digits = digits.trim_start_matches('0');
    let mut num: i128 = if digits.is_empty() {
        0
    } else {
        if digits.len() > 36 {
            return None;
        }
        digits.parse().ok()?
    };
    let scale = exp - frac_part.len() as i32;
    let mut den: i128 = 1;
    if scale >= 0 {
        for _ in 0..scale {
            num = num.checked_mul(10)?;
        }
    } else {
        for _ in 0..(-scale) {
            den = den.checked_mul(10)?;
        }
    }
    if neg {
        num = -num;
    }
    let r = Ratio::new(num, den);
    Some((*r.numer(), *r.denom()))
}

/// Field operations plus the elementary functions needed by jets.
pub trait Scalar:
    Copy
    + fmt::Debug
    + fmt::Display
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    const MODE: Mode;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_int(v: i64) -> Self;
    fn from_ratio(num: i128, den: i128) -> Self;
    fn from_literal(lit: &Literal) -> Result<Self>;
    fn from_f64(v: f64) -> Result<Self> {
        Self::from_literal(&Literal::from_f64_decimal(v))
    }
    fn to_literal(self) -> Literal;
    fn to_f64(self) -> f64;
    fn is_zero(self) -> bool;
    /// False for a poisoned rational or a non-finite float.
    fn is_valid(self) -> bool;
    fn checked(self) -> Result<Self> {
        if self.is_valid() {
            Ok(self)
        } else if Self::MODE == Mode::Rational {
            Err(Error::Overflow)
        } else {
            Err(Error::Domain("non-finite value".into()))
        }
    }
    fn magnitude(self) -> f64 {
        self.to_f64().abs()
    }
    fn exp(self) -> Result<Self>;
    fn ln(self) -> Result<Self>;
    fn sin(self) -> Result<Self>;
    fn cos(self) -> Result<Self>;
    fn sinh(self) -> Result<Self>;
    fn cosh(self) -> Result<Self>;
    fn sqrt(self) -> Result<Self>;
    fn pi() -> Result<Self>;
    fn to_json(self) -> serde_json::Value;
    fn from_json(v: &serde_json::Value) -> Result<Self>;
}

impl Scalar for f64 {
    const MODE: Mode = Mode::Float;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_int(v: i64) -> Self {
        v as f64
    }
    fn from_ratio(num: i128, den: i128) -> Self {
        num as f64 / den as f64
    }
    fn from_literal(lit: &Literal) -> Result<Self> {
        Ok(lit.approx)
    }
    fn from_f64(v: f64) -> Result<Self> {
        Ok(v)
    }
    fn to_literal(self) -> Literal {
        Literal::float(self)
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn is_zero(self) -> bool {
        self == 0.0
    }
    fn is_valid(self) -> bool {
        self.is_finite()
    }
    fn exp(self) -> Result<Self> {
        Ok(f64::exp(self))
    }
    fn ln(self) -> Result<Self> {
        if self <= 0.0 {
            return Err(Error::Domain(format!("log of non-positive value {self}")));
        }
        Ok(f64::ln(self))
    }
    fn sin(self) -> Result<Self> {
        Ok(f64::sin(self))
    }
    fn cos(self) -> Result<Self> {
        Ok(f64::cos(self))
    }
    fn sinh(self) -> Result<Self> {
        Ok(f64::sinh(self))
    }
    fn cosh(self) -> Result<Self> {
        Ok(f64::cosh(self))
    }
    fn sqrt(self) -> Result<Self> {
        if self < 0.0 {
            return Err(Error::Domain(format!("sqrt of negative value {self}")));
        }
        Ok(f64::sqrt(self))
    }
    fn pi() -> Result<Self> {
        Ok(std::f64::consts::PI)
    }
    fn to_json(self) -> serde_json::Value {
        serde_json::json!(self)
    }
    fn from_json(v: &serde_json::Value) -> Result<Self> {
        match v {
            serde_json::Value::Number(n) => n
                .as_f64()
                .ok_or_else(|| Error::invalid("bad number")),
            serde_json::Value::String(s) => {
                let r = parse_ratio(s)?;
                Ok(*r.numer() as f64 / *r.denom() as f64)
            }
            _ => Err(Error::invalid("coefficient must be a number or string")),
        }
    }
}

fn parse_ratio(s: &str) -> Result<Ratio<i128>> {
    let bad = || Error::invalid(format!("bad rational \"{s}\""));
    match s.split_once('/') {
        Some((a, b)) => {
            let n: i128 = a.trim().parse().map_err(|_| bad())?;
            let d: i128 = b.trim().parse().map_err(|_| bad())?;
            if d == 0 {
                return Err(bad());
            }
            Ok(Ratio::new(n, d))
        }
        None => {
            let (n, d) = exact_decimal(s.trim()).ok_or_else(bad)?;
            Ok(Ratio::new(n, d))
        }
    }
}

/// Exact rational with overflow poisoning: any overflow or division by zero
/// yields an invalid value that propagates through all later arithmetic.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rational(Option<Ratio<i128>>);

impl Rational {
    pub fn new(num: i128, den: i128) -> Self {
        if den == 0 {
            Rational(None)
        } else {
            Rational(Some(Ratio::new(num, den)))
        }
    }

    pub fn ratio(self) -> Option<Ratio<i128>> {
        self.0
    }

    pub fn numer_denom(self) -> Option<(i128, i128)> {
        self.0.map(|r| (*r.numer(), *r.denom()))
    }

    fn exact_only(self, what: &str, at_zero: Ratio<i128>) -> Result<Self> {
        match self.0 {
            Some(r) if r.is_zero() => Ok(Rational(Some(at_zero))),
            Some(_) => Err(Error::Inexact(format!("{what}({self})"))),
            None => Err(Error::Overflow),
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(r) if *r.denom() == 1 => write!(f, "{}", r.numer()),
            Some(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            None => write!(f, "overflow"),
        }
    }
}

macro_rules! rational_binop {
    ($tr:ident, $m:ident, $checked:ident, $atr:ident, $am:ident) => {
        impl $tr for Rational {
            type Output = Rational;
            fn $m(self, rhs: Rational) -> Rational {
                match (self.0, rhs.0) {
                    (Some(a), Some(b)) => Rational(a.$checked(&b)),
                    _ => Rational(None),
                }
            }
        }
        impl $atr for Rational {
            fn $am(&mut self, rhs: Rational) {
                *self = $tr::$m(*self, rhs);
            }
        }
    };
}

rational_binop!(Add, add, checked_add, AddAssign, add_assign);
rational_binop!(Sub, sub, checked_sub, SubAssign, sub_assign);
rational_binop!(Mul, mul, checked_mul, MulAssign, mul_assign);

impl Div for Rational {
    type Output = Rational;
    fn div(self, rhs: Rational) -> Rational {
        match (self.0, rhs.0) {
            (Some(a), Some(b)) if !b.is_zero() => Rational(a.checked_div(&b)),
            _ => Rational(None),
        }
    }
}

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(self.0.and_then(|r| {
            r.numer()
                .checked_neg()
                .map(|n| Ratio::new_raw(n, *r.denom()))
        }))
    }
}

fn perfect_sqrt(v: i128) -> Option<i128> {
    if v < 0 {
        return None;
    }
    let s = v.sqrt();
    (s * s == v).then_some(s)
}

impl Scalar for Rational {
    const MODE: Mode = Mode::Rational;

    fn zero() -> Self {
        Rational(Some(Ratio::zero()))
    }
    fn one() -> Self {
        Rational(Some(Ratio::one()))
    }
    fn from_int(v: i64) -> Self {
        Rational(Some(Ratio::from_integer(v as i128)))
    }
    fn from_ratio(num: i128, den: i128) -> Self {
        Rational::new(num, den)
    }
    fn from_literal(lit: &Literal) -> Result<Self> {
        match lit.exact {
            Some((n, d)) => Ok(Rational::new(n, d)),
            None => Err(Error::Inexact(format!("literal {}", lit.approx))),
        }
    }
    fn to_literal(self) -> Literal {
        match self.0 {
            Some(r) => Literal::ratio(*r.numer(), *r.denom()),
            None => Literal::float(f64::NAN),
        }
    }
    fn to_f64(self) -> f64 {
        match self.0 {
            Some(r) => r.to_f64().unwrap_or(f64::NAN),
            None => f64::NAN,
        }
    }
    fn is_zero(self) -> bool {
        matches!(self.0, Some(r) if r.is_zero())
    }
    fn is_valid(self) -> bool {
        self.0.is_some()
    }
    fn exp(self) -> Result<Self> {
        self.exact_only("exp", Ratio::one())
    }
    fn ln(self) -> Result<Self> {
        match self.0 {
            Some(r) if r.is_one() => Ok(Self::zero()),
            Some(r) if !r.is_positive() => {
                Err(Error::Domain(format!("log of non-positive value {self}")))
            }
            Some(_) => Err(Error::Inexact(format!("log({self})"))),
            None => Err(Error::Overflow),
        }
    }
    fn sin(self) -> Result<Self> {
        self.exact_only("sin", Ratio::zero())
    }
    fn cos(self) -> Result<Self> {
        self.exact_only("cos", Ratio::one())
    }
    fn sinh(self) -> Result<Self> {
        self.exact_only("sinh", Ratio::zero())
    }
    fn cosh(self) -> Result<Self> {
        self.exact_only("cosh", Ratio::one())
    }
    fn sqrt(self) -> Result<Self> {
        match self.0 {
            Some(r) if r.is_negative() => {
                Err(Error::Domain(format!("sqrt of negative value {self}")))
            }
            Some(r) => match (perfect_sqrt(*r.numer()), perfect_sqrt(*r.denom())) {
                (Some(a), Some(b)) => Ok(Rational::new(a, b)),
                _ => Err(Error::Inexact(format!("sqrt({self})"))),
            },
            None => Err(Error::Overflow),
        }
    }
    fn pi() -> Result<Self> {
        Err(Error::Inexact("pi".into()))
    }
    fn to_json(self) -> serde_json::Value {
        serde_json::Value::String(self.to_string())
    }
    fn from_json(v: &serde_json::Value) -> Result<Self> {
        match v {
            serde_json::Value::String(s) => {
                let r = parse_ratio(s)?;
                Ok(Rational(Some(r)))
            }
            serde_json::Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Ok(Self::from_int(i))
                } else {
                    Self::from_literal(&Literal::parse_decimal(&n.to_string()).ok_or_else(
                        || Error::invalid("bad number"),
                    )?)
                }
            }
            _ => Err(Error::invalid("coefficient must be a number or string")),
        }
    }
}

/// Largest magnitude, for residual reporting.
pub fn max_magnitude<S: Scalar>(vals: impl IntoIterator<Item = S>) -> f64 {
    vals.into_iter().map(|v| {
        if v.is_valid() {
            v.magnitude()
        } else {
            f64::INFINITY
        }
    })
    .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_literals_are_exact() {
        assert_eq!(exact_decimal("0.25"), Some((1, 4)));
        assert_eq!(exact_decimal("3e-2"), Some((3, 100)));
        assert_eq!(exact_decimal("-1.5E1"), Some((-15, 1)));
        assert_eq!(Literal::from_f64_decimal(0.1).exact, Some((1, 10)));
    }

    #[test]
    fn overflow_poisons() {
        let big = Rational::new(i128::MAX / 2, 1);
        let x = big * big;
        assert!(!x.is_valid());
        assert!(!(x + Rational::one()).is_valid());
        assert_eq!(x.checked(), Err(Error::Overflow));
        assert!(!(Rational::one() / Rational::zero()).is_valid());
    }

    #[test]
    fn exact_elementary_values() {
        assert_eq!(Rational::zero().exp().unwrap(), Rational::one());
        assert_eq!(Rational::new(9, 4).sqrt().unwrap(), Rational::new(3, 2));
        assert!(matches!(Rational::new(2, 1).sqrt(), Err(Error::Inexact(_))));
        assert!(matches!(Rational::new(-1, 1).ln(), Err(Error::Domain(_))));
    }

    #[test]
    fn json_round_trip() {
        let r = Rational::new(-7, 3);
        assert_eq!(Rational::from_json(&r.to_json()).unwrap(), r);
        assert_eq!(f64::from_json(&serde_json::json!("1/4")).unwrap(), 0.25);
    }
}
